// Writes a synthetic price panel drawn from the model return sampler.
//   make_panel --assets 16 --days 2800 --c 0.26 --N 4.2 --vol 0.02 --seed 2024

#include <iostream>

#include <CLI11.hpp>

#include "ensloss/calibration.hpp"
#include "ensloss/io.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Synthetic price panel"};
  int assets = 16;
  int days = 2800;
  double c = 0.26;
  double n = 4.2;
  double vol = 0.02;
  std::uint64_t seed = 2024;
  app.add_option("--assets", assets);
  app.add_option("--days", days);
  app.add_option("--c", c);
  app.add_option("--N", n);
  app.add_option("--vol", vol);
  app.add_option("--seed", seed);
  CLI11_PARSE(app, argc, argv);
  try {
    ensloss::io::write_price_panel(std::cout, ensloss::synthetic_panel(assets, days, c, n, vol, seed));
  } catch (const ensloss::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
