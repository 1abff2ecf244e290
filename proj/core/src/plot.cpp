#include "simulrl/plot.hpp"

#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "simulrl/errors.hpp"
#include "simulrl/jsonl.hpp"

namespace simulrl {

std::vector<double> ema(const std::vector<double>& xs, double weight) {
  if (!(weight > 0.0 && weight <= 1.0)) throw std::invalid_argument("ema: weight must be in (0, 1]");
  std::vector<double> out;
  out.reserve(xs.size());
  for (double x : xs) out.push_back(out.empty() ? x : weight * x + (1.0 - weight) * out.back());
  return out;
}

PlotSeries read_validation_series(const std::filesystem::path& log, const std::string& label) {
  PlotSeries s;
  s.label = label;
  for (const auto& r : read_jsonl(log)) {
    const auto type = r.value("type", "");
    if (type != "base" && type != "validation") continue;
    try {
      s.updates.push_back(r.at("update").get<int>());
      s.bleu.push_back(r.at("bleu").get<double>());
      s.text_laal.push_back(r.at("text_laal").get<double>());
      s.end_offset.push_back(r.at("end_offset").get<double>());
    } catch (const nlohmann::json::exception& e) {
      throw DataError(log.string() + ": malformed validation record: " + e.what());
    }
  }
  if (s.updates.empty()) throw DataError(log.string() + ": no validation records");
  return s;
}

std::string plot_csv(const std::vector<PlotSeries>& series, double ema_weight) {
  std::ostringstream out;
  out << std::setprecision(10);
  out << "# ema_weight=" << ema_weight << " (weight of the newest sample)\n";
  out << "# runs=" << series.size() << "\n";
  out << "run,update,bleu,text_laal,end_offset,bleu_ema,text_laal_ema\n";
  for (const auto& s : series) {
    const auto bleu_ema = ema(s.bleu, ema_weight);
    const auto laal_ema = ema(s.text_laal, ema_weight);
    for (std::size_t i = 0; i < s.updates.size(); ++i)
      out << s.label << ',' << s.updates[i] << ',' << s.bleu[i] << ',' << s.text_laal[i] << ',' << s.end_offset[i]
          << ',' << bleu_ema[i] << ',' << laal_ema[i] << '\n';
  }
  return out.str();
}

}  // namespace simulrl
