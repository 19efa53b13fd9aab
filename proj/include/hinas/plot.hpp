#pragma once

#include <string>
#include <vector>

#include "hinas/search.hpp"

namespace hinas {

/// PSNR-over-epochs curve (SSIM on a secondary scale) rendered to a PNG.
void plot_history_png(const std::vector<EvalRecord>& history, const std::string& path,
                      const std::string& title = "validation");

}  // namespace hinas
