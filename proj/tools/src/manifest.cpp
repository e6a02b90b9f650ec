#include <sbglm_cli/manifest.hpp>

#include <sbglm/error.hpp>
#include <sbglm/parallel.hpp>

#include <Eigen/Core>
#include <openssl/evp.h>

#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

#ifndef SBGLM_VERSION
#define SBGLM_VERSION "unknown"
#endif

namespace sbglm::cli {

namespace fs = std::filesystem;

namespace {

std::string digest(const void* data, std::size_t size, EVP_MD_CTX* ctx, bool finish) {
  if (data && size) EVP_DigestUpdate(ctx, data, size);
  if (!finish) return {};
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

using Ctx = std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)>;

Ctx new_ctx() {
  Ctx ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw NumericalError("sha256: init failed");
  return ctx;
}

}  // namespace

std::string sha256_hex(const std::string& bytes) {
  Ctx ctx = new_ctx();
  return digest(bytes.data(), bytes.size(), ctx.get(), true);
}

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path);
  Ctx ctx = new_ctx();
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    digest(buf, static_cast<std::size_t>(in.gcount()), ctx.get(), false);
  }
  return digest(nullptr, 0, ctx.get(), true);
}

Manifest::Manifest(std::string command, std::string out_dir, std::uint64_t seed)
    : command_(std::move(command)), out_dir_(std::move(out_dir)), seed_(seed) {
  fs::create_directories(out_dir_);
}

std::string Manifest::path(const std::string& relative) const { return (fs::path(out_dir_) / relative).string(); }

void Manifest::add_input(const std::string& p) { inputs_.emplace_back(p, sha256_file(p)); }

void Manifest::add_output(const std::string& relative) { outputs_.push_back(relative); }

void Manifest::warn(const std::string& message) { warnings_.push_back(message); }

void Manifest::record_stage(const std::string& name, double seconds) {
  for (auto& [n, s] : stages_) {
    if (n == name) {
      s += seconds;
      return;
    }
  }
  stages_.emplace_back(name, seconds);
}

nlohmann::json Manifest::to_json() const {
  nlohmann::json j;
  j["command"] = command_;
  j["seed"] = seed_;
  j["config"] = config_;
  std::ostringstream eigen;
  eigen << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.' << EIGEN_MINOR_VERSION;
  j["versions"] = {{"sbglm", SBGLM_VERSION}, {"eigen", eigen.str()}, {"compiler", __VERSION__}};
  j["threads"] = default_threads();
  j["inputs"] = nlohmann::json::object();
  for (const auto& [p, h] : inputs_) j["inputs"][p] = h;
  j["outputs"] = nlohmann::json::object();
  for (const auto& o : outputs_) j["outputs"][o] = sha256_file(path(o));
  j["stages"] = nlohmann::json::object();
  for (const auto& [n, s] : stages_) j["stages"][n] = s;
  j["warnings"] = warnings_;
  return j;
}

void Manifest::write() const {
  std::ofstream out(path("manifest.json"));
  if (!out) throw InputError("cannot write " + path("manifest.json"));
  out << to_json().dump(2) << '\n';
}

Stage::Stage(Manifest& manifest, std::string name)
    : manifest_(manifest), name_(std::move(name)), start_(std::chrono::steady_clock::now()) {}

Stage::~Stage() {
  manifest_.record_stage(name_, std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count());
}

}  // namespace sbglm::cli
