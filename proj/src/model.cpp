#include "vlr/model.hpp"

#include <sstream>

namespace vlr {

void ModelConfig::validate() const {
  if (d_model < 1 || n_heads < 1 || d_model % n_heads != 0)
    throw ConfigMismatch("d_model must be a positive multiple of n_heads");
  if (enc_depth < 1) throw ConfigMismatch("enc_depth must be >= 1");
  if (dec_depth < 1) throw ConfigMismatch("dec_depth must be >= 1");
  if (p_h < 1 || p_w < 1 || img_h % p_h != 0 || img_w % p_w != 0)
    throw ConfigMismatch("image size must be divisible by the patch size");
  if (img_c < 1) throw ConfigMismatch("img_c must be >= 1");
  if (max_label_len < 1) throw ConfigMismatch("max_label_len must be >= 1");
  if (charset_chars.empty()) throw ConfigMismatch("charset must not be empty");
  if (r_v < 0.0 || r_v > 1.0 || r_l < 0.0 || r_l > 1.0)
    throw ConfigMismatch("masking ratios must lie in [0, 1]");
  if (lambda_v < 0.0 || lambda_l < 0.0)
    throw ConfigMismatch("loss weights must be nonnegative");
  if (perm_count < 1) throw ConfigMismatch("perm_count must be >= 1");
  if (ffn_mult < 1) throw ConfigMismatch("ffn_mult must be >= 1");
  Charset check(charset_chars);  // validates distinctness
  (void)check;
}

std::string ModelConfig::to_text() const {
  std::ostringstream os;
  os << "d_model=" << d_model << "\n";
  os << "n_heads=" << n_heads << "\n";
  os << "enc_depth=" << enc_depth << "\n";
  os << "dec_depth=" << dec_depth << "\n";
  os << "p_h=" << p_h << "\n";
  os << "p_w=" << p_w << "\n";
  os << "img_h=" << img_h << "\n";
  os << "img_w=" << img_w << "\n";
  os << "img_c=" << img_c << "\n";
  os << "max_label_len=" << max_label_len << "\n";
  os << "charset=" << charset_chars << "\n";
  os << "r_v=" << r_v << "\n";
  os << "r_l=" << r_l << "\n";
  os << "lambda_v=" << lambda_v << "\n";
  os << "lambda_l=" << lambda_l << "\n";
  os << "perm_count=" << perm_count << "\n";
  os << "ffn_mult=" << ffn_mult << "\n";
  os << "head_hidden=" << head_hidden << "\n";
  os << "share_heads=" << (share_heads ? 1 : 0) << "\n";
  return os.str();
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  ModelConfig cfg;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigMismatch("bad config line: " + line);
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    try {
      if (key == "d_model")
        cfg.d_model = std::stoi(value);
      else if (key == "n_heads")
        cfg.n_heads = std::stoi(value);
      else if (key == "enc_depth")
        cfg.enc_depth = std::stoi(value);
      else if (key == "dec_depth")
        cfg.dec_depth = std::stoi(value);
      else if (key == "p_h")
        cfg.p_h = std::stoi(value);
      else if (key == "p_w")
        cfg.p_w = std::stoi(value);
      else if (key == "img_h")
        cfg.img_h = std::stoi(value);
      else if (key == "img_w")
        cfg.img_w = std::stoi(value);
      else if (key == "img_c")
        cfg.img_c = std::stoi(value);
      else if (key == "max_label_len")
        cfg.max_label_len = std::stoi(value);
      else if (key == "charset")
        cfg.charset_chars = value;
      else if (key == "r_v")
        cfg.r_v = std::stod(value);
      else if (key == "r_l")
        cfg.r_l = std::stod(value);
      else if (key == "lambda_v")
        cfg.lambda_v = std::stod(value);
      else if (key == "lambda_l")
        cfg.lambda_l = std::stod(value);
      else if (key == "perm_count")
        cfg.perm_count = std::stoi(value);
      else if (key == "ffn_mult")
        cfg.ffn_mult = std::stoi(value);
      else if (key == "head_hidden")
        cfg.head_hidden = std::stoi(value);
      else if (key == "share_heads")
        cfg.share_heads = std::stoi(value) != 0;
      else
        throw ConfigMismatch("unknown config key: " + key);
    } catch (const std::invalid_argument&) {
      throw ConfigMismatch("bad value for " + key + ": " + value);
    }
  }
  return cfg;
}

}  // namespace vlr
