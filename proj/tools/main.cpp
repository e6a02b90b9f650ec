#include <sbglm/error.hpp>
#include <sbglm_cli/commands.hpp>

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Surface-based spatial Bayesian GLM for task fMRI"};
  app.set_version_flag("--version", SBGLM_VERSION);
  sbglm::cli::register_commands(app);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const sbglm::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
