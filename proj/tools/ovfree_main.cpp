// ovfree: batch driver for the operator-valued free probability experiments.
//
//   ovfree run config.json [--output path]
//   ovfree verify config.json [--artifact path]
//   ovfree moments eval --word "1+i:1,2i:2" --mode free [--law cauchy ...]
//   ovfree killer --targets "i,1+i,0.3+2i"
//
// Exit codes: 0 success, 1 I/O or hash mismatch, 2 schema error, 3 numerical failure.

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ovfree/error.hpp"
#include "ovfree/experiments.hpp"

namespace {

constexpr int kExitIo = 1;
constexpr int kExitSchema = 2;
constexpr int kExitNumerical = 3;

void report(const std::string& kind, const std::string& code, const std::string& detail) {
  ovfree::Json j{{"error", kind}, {"code", code}, {"detail", detail}};
  std::cerr << j.dump() << "\n";
}

ovfree::Json load_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::ios_base::failure("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  ovfree::Json j = ovfree::Json::parse(ss.str(), nullptr, false);
  if (j.is_discarded()) throw ovfree::SchemaError("config: " + path + " is not valid JSON");
  return j;
}

int execute(const ovfree::Json& config_json, const std::string& output_override, bool json_stdout = false) {
  ovfree::ExperimentConfig cfg = ovfree::parse_config(config_json);
  if (!output_override.empty()) cfg.output = output_override;
  const ovfree::ExperimentResult result = ovfree::run_experiment(cfg);
  const bool csv = !json_stdout && ovfree::wants_csv(cfg, result);
  if (cfg.output == "-") {
    ovfree::write_artifact(std::cout, cfg, result, csv);
    return 0;
  }
  std::ofstream out(cfg.output, std::ios::binary);
  if (!out) throw std::ios_base::failure("cannot write " + cfg.output);
  ovfree::write_artifact(out, cfg, result, csv);
  return 0;
}

template <class F>
int guarded(F&& body) {
  try {
    return body();
  } catch (const ovfree::SchemaError& e) {
    report("schema", "SchemaError", e.what());
    return kExitSchema;
  } catch (const ovfree::Error& e) {
    report("numerical", ovfree::to_string(e.code()), e.what());
    return kExitNumerical;
  } catch (const std::ios_base::failure& e) {
    report("io", "IoError", e.what());
    return kExitIo;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"operator-valued free probability experiments"};
  app.require_subcommand(1);

  std::string config_path, output;
  auto* run = app.add_subcommand("run", "run the experiment described by a JSON config");
  run->add_option("config", config_path, "config file")->required();
  run->add_option("-o,--output", output, "override the config's output path");

  std::string verify_config, artifact;
  auto* verify = app.add_subcommand("verify", "check the config hash embedded in an artifact");
  verify->add_option("config", verify_config, "config file")->required();
  verify->add_option("--artifact", artifact, "artifact path (default: the config's output)");

  auto* moments = app.add_subcommand("moments", "resolvent word moments");
  moments->require_subcommand(1);
  auto* moments_eval = moments->add_subcommand("eval", "evaluate one resolvent word");
  std::string word, mode = "free";
  std::vector<std::string> laws;
  std::uint64_t moments_seed = 1;
  moments_eval->add_option("--word", word, "letters [(z,var),...] or z:var,..., variables numbered from 1")->required();
  moments_eval->add_option("--mode", mode, "equal | classical | boolean | free");
  moments_eval->add_option("--law", laws, "law per variable: a name or a JSON law object");
  moments_eval->add_option("--seed", moments_seed, "seed");

  std::string targets;
  double delta = 1e-3;
  std::uint64_t killer_seed = 1;
  auto* killer = app.add_subcommand("killer", "build a killer F-transform for the given targets");
  killer->add_option("--targets", targets, "comma-separated points of the upper half plane")->required();
  killer->add_option("--delta", delta, "witness radius");
  killer->add_option("--seed", killer_seed, "seed for the half-plane check");

  CLI11_PARSE(app, argc, argv);

  if (*run) return guarded([&] { return execute(load_json(config_path), output); });

  if (*verify) {
    return guarded([&] {
      const ovfree::ExperimentConfig cfg = ovfree::parse_config(load_json(verify_config));
      const std::string path = artifact.empty() ? cfg.output : artifact;
      switch (ovfree::verify_artifact(cfg, path)) {
        case ovfree::VerifyStatus::Match:
          std::cout << "match " << path << "\n";
          return 0;
        case ovfree::VerifyStatus::Mismatch:
          std::cout << "mismatch " << path << "\n";
          return kExitIo;
        case ovfree::VerifyStatus::MissingHeader:
          std::cout << "no config hash in " << path << "\n";
          return kExitIo;
      }
      return kExitIo;
    });
  }

  if (*moments_eval) {
    return guarded([&] {
      ovfree::Json params{{"word", word}, {"mode", mode}};
      if (!laws.empty()) {
        ovfree::Json arr = ovfree::Json::array();
        for (const std::string& l : laws) {
          ovfree::Json parsed = ovfree::Json::parse(l, nullptr, false);
          arr.push_back(parsed.is_discarded() ? ovfree::Json(l) : parsed);
        }
        params["laws"] = arr;
      }
      return execute(ovfree::Json{{"command", "moments"}, {"seed", moments_seed}, {"params", params}}, "", true);
    });
  }

  if (*killer) {
    return guarded([&] {
      ovfree::Json params{{"targets", targets}, {"delta", delta}};
      return execute(ovfree::Json{{"command", "killer"}, {"seed", killer_seed}, {"params", params}}, "");
    });
  }
  return 0;
}
