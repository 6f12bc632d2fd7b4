#include "cellpk/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cellpk/error.hpp"

namespace cellpk {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw UsageError("config key '" + key + "': '" + v + "' is not a number");
  return out;
}

long long to_integer(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw UsageError("config key '" + key + "': '" + v + "' is not an integer");
  return out;
}

}  // namespace

std::vector<ConfigEntry> parse_key_values(const std::string& text, const std::string& origin) {
  std::vector<ConfigEntry> out;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    ConfigEntry e{trim(line.substr(0, eq)), trim(line.substr(eq + 1)), line_no};
    if (e.key.empty()) throw UsageError(origin + ":" + std::to_string(line_no) + ": empty key");
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<ConfigEntry> read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str(), path.string());
}

double parse_split(const std::string& text) {
  const auto slash = text.find('/');
  double fraction = 0.0;
  if (slash == std::string::npos) {
    fraction = to_double("split", trim(text));
  } else {
    const double train = to_double("split", trim(text.substr(0, slash)));
    const double val = to_double("split", trim(text.substr(slash + 1)));
    if (!(train > 0.0 && val > 0.0)) throw UsageError("split '" + text + "' must have two positive parts");
    if (std::abs(train + val - 100.0) > 1e-9) throw UsageError("split '" + text + "' must sum to 100");
    fraction = train / 100.0;
  }
  if (!(fraction > 0.0 && fraction < 1.0)) throw UsageError("split '" + text + "' must be strictly between 0 and 1");
  return fraction;
}

std::string format_split(double train_fraction) {
  const long train = std::lround(train_fraction * 100.0);
  if (std::abs(train_fraction * 100.0 - static_cast<double>(train)) < 1e-9)
    return std::to_string(train) + "/" + std::to_string(100 - train);
  std::ostringstream os;
  os << train_fraction;
  return os.str();
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = {"learning_rate", "epochs",   "batch_size", "early_stopping_patience",
                                             "optimizer",     "split",    "loss",       "seed",
                                             "resolution",    "workers"};
  return k;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "learning_rate") {
    train.learning_rate = to_double(key, value);
  } else if (key == "epochs") {
    train.max_epochs = static_cast<int>(to_integer(key, value));
  } else if (key == "batch_size") {
    train.batch_size = static_cast<int>(to_integer(key, value));
  } else if (key == "early_stopping_patience") {
    train.early_stop_patience = static_cast<int>(to_integer(key, value));
  } else if (key == "optimizer") {
    if (value != "adam") throw UsageError("unsupported optimizer '" + value + "' (only adam)");
    train.optimizer = value;
  } else if (key == "split") {
    train.train_fraction = parse_split(value);
  } else if (key == "loss") {
    if (value != "mse") throw UsageError("unsupported loss '" + value + "' (only mse)");
    train.loss = value;
  } else if (key == "seed") {
    train.seed = static_cast<std::uint64_t>(to_integer(key, value));
  } else if (key == "resolution") {
    resolution = static_cast<int>(to_integer(key, value));
    if (resolution < 16) throw UsageError("resolution must be >= 16");
  } else if (key == "workers") {
    workers = static_cast<int>(to_integer(key, value));
    if (workers < 1) throw UsageError("workers must be >= 1");
  } else {
    throw UsageError("unknown config key '" + key + "'");
  }
}

void RunConfig::apply(const std::vector<ConfigEntry>& entries) {
  for (const auto& e : entries) {
    try {
      set(e.key, e.value);
    } catch (const UsageError& err) {
      throw UsageError("line " + std::to_string(e.line) + ": " + err.what());
    }
  }
  train.validate();
}

std::string RunConfig::to_string() const {
  std::ostringstream os;
  os.precision(17);
  os << "learning_rate = " << train.learning_rate << '\n'
     << "epochs = " << train.max_epochs << '\n'
     << "batch_size = " << train.batch_size << '\n'
     << "early_stopping_patience = " << train.early_stop_patience << '\n'
     << "optimizer = " << train.optimizer << '\n'
     << "split = " << format_split(train.train_fraction) << '\n'
     << "loss = " << train.loss << '\n'
     << "seed = " << train.seed << '\n'
     << "resolution = " << resolution << '\n'
     << "workers = " << workers << '\n';
  return os.str();
}

}  // namespace cellpk
