#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace simulrl {

// s_0 = x_0, s_k = w * x_k + (1 - w) * s_{k-1}; w is the weight of the new
// sample, so w = 1 returns the raw series. Requires w in (0, 1].
std::vector<double> ema(const std::vector<double>& xs, double weight);

struct PlotSeries {
  std::string label;
  std::vector<int> updates;
  std::vector<double> bleu;
  std::vector<double> text_laal;
  std::vector<double> end_offset;
};

// Validation records of one RL metrics log (the base point first, at update 0).
PlotSeries read_validation_series(const std::filesystem::path& log, const std::string& label);

// Long-format CSV: run,update,bleu,text_laal,end_offset,bleu_ema,text_laal_ema.
// Leading '#' lines carry metadata, including the smoothing weight.
std::string plot_csv(const std::vector<PlotSeries>& series, double ema_weight);

}  // namespace simulrl
