#include "labgrade/training.hpp"

#include <sstream>

#include <json.hpp>

#include "labgrade/errors.hpp"

namespace labgrade {

namespace {

nlohmann::json loss_value(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

double loss_from(const nlohmann::json& v) {
  return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
}

}  // namespace

std::string TrainingLog::to_jsonl() const {
  std::string out;
  for (const auto& e : epochs) {
    nlohmann::ordered_json rec;
    rec["epoch"] = e.epoch;
    rec["train_loss"] = loss_value(e.train_loss);
    rec["val_loss"] = loss_value(e.val_loss);
    out += rec.dump() + '\n';
  }
  return out;
}

TrainingLog TrainingLog::from_jsonl(const std::string& text) {
  TrainingLog log;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto rec = nlohmann::json::parse(line);
      EpochRecord e{rec.at("epoch").get<int>(), loss_from(rec.at("train_loss")), loss_from(rec.at("val_loss"))};
      log.epochs.push_back(e);
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(number, std::string("bad training-log record: ") + e.what());
    }
  }
  for (const auto& e : log.epochs) {
    if (std::isfinite(e.val_loss) && !(e.val_loss >= log.best_val_loss)) {
      log.best_val_loss = e.val_loss;
      log.best_epoch = e.epoch;
    }
  }
  return log;
}

}  // namespace labgrade
