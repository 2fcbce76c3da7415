#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "sentigrid/gazetteer_http.hpp"
#include "sentigrid/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUserError = 2;
constexpr int kExitInternalError = 3;

struct Options {
  std::string config_path;
  std::string input_override;
  std::string out_dir_override;
  std::optional<std::uint64_t> seed_override;
  std::optional<std::size_t> top_k_override;
  std::optional<std::string> city;
  std::string manifest_path;
  std::string events_path;
  bool bias_mode = false;
  std::string events_full, events_nocity, events_null;
  double bias_margin = 2.0;
};

sentigrid::pipeline::PipelineConfig load_with_overrides(const Options& opt) {
  auto cfg = sentigrid::pipeline::load_config(opt.config_path);
  if (!opt.input_override.empty()) cfg.input_path = opt.input_override;
  if (!opt.out_dir_override.empty()) cfg.out_dir = opt.out_dir_override;
  if (opt.seed_override) cfg.synth_config.seed = *opt.seed_override;
  if (opt.top_k_override) cfg.top_k = *opt.top_k_override;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spatiotemporal sentiment deviation pipeline"};
  app.require_subcommand(1);

  Options opt;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "pipeline config JSON")->required();
    sub->add_option("--input", opt.input_override, "override paths.input");
    sub->add_option("--out-dir", opt.out_dir_override, "override paths.out_dir");
    sub->add_option("--seed", opt.seed_override, "override the synth seed");
    sub->add_option("--top-k", opt.top_k_override, "override top_k");
  };

  CLI::App* c_ingest = app.add_subcommand("ingest", "parse, filter, resolve, score, and bin");
  CLI::App* c_fit = app.add_subcommand("fit", "fit baseline models on the training window");
  CLI::App* c_detect = app.add_subcommand("detect", "score test bins and merge events");
  CLI::App* c_report = app.add_subcommand("report", "emit event report and figure exports");
  CLI::App* c_synth = app.add_subcommand("synth", "generate a synthetic corpus");
  CLI::App* c_eval = app.add_subcommand("eval", "evaluate detection or model bias");
  CLI::App* c_all = app.add_subcommand("all", "ingest, fit, detect, report");
  for (CLI::App* sub : {c_ingest, c_fit, c_detect, c_report, c_synth, c_eval, c_all}) {
    add_common(sub);
  }
  c_report->add_option("--city", [&](const std::vector<std::string>& v) {
    opt.city = v.back();
    return true;
  }, "also export this city's timeline");
  c_eval->add_option("--manifest", opt.manifest_path, "synthetic ground-truth manifest");
  c_eval->add_option("--events", opt.events_path, "events CSV to evaluate");
  c_eval->add_flag("--bias", opt.bias_mode, "compare event shares across three models");
  c_eval->add_option("--events-full", opt.events_full, "full model events CSV");
  c_eval->add_option("--events-nocity", opt.events_nocity, "no-city model events CSV");
  c_eval->add_option("--events-null", opt.events_null, "null model events CSV");
  c_eval->add_option("--margin", opt.bias_margin, "flagging margin in events (default 2)");

  CLI11_PARSE(app, argc, argv);

  try {
    const auto cfg = load_with_overrides(opt);
    if (c_ingest->parsed() || c_all->parsed()) {
      std::unique_ptr<sentigrid::geo::HttpGazetteerSource> gazetteer;
      if (cfg.has_gazetteer) {
        sentigrid::geo::GazetteerClientConfig gcfg;
        gcfg.endpoint = cfg.gazetteer_endpoint;
        gcfg.rate_limit_per_sec = cfg.gazetteer_rate_limit;
        gcfg.user_agent = cfg.gazetteer_user_agent;
        gazetteer = std::make_unique<sentigrid::geo::HttpGazetteerSource>(gcfg);
      }
      if (c_ingest->parsed()) {
        sentigrid::pipeline::cmd_ingest(cfg, gazetteer.get());
      } else {
        sentigrid::pipeline::cmd_ingest(cfg, gazetteer.get());
        sentigrid::pipeline::cmd_fit(cfg);
        sentigrid::pipeline::cmd_detect(cfg);
        sentigrid::pipeline::cmd_report(cfg, std::nullopt);
      }
    } else if (c_fit->parsed()) {
      sentigrid::pipeline::cmd_fit(cfg);
    } else if (c_detect->parsed()) {
      sentigrid::pipeline::cmd_detect(cfg);
    } else if (c_report->parsed()) {
      sentigrid::pipeline::cmd_report(cfg, opt.city);
    } else if (c_synth->parsed()) {
      sentigrid::pipeline::cmd_synth(cfg);
    } else if (c_eval->parsed()) {
      if (opt.bias_mode) {
        if (opt.events_full.empty() || opt.events_nocity.empty() || opt.events_null.empty()) {
          std::cerr << "eval --bias requires --events-full, --events-nocity, --events-null\n";
          return kExitUserError;
        }
        sentigrid::pipeline::cmd_eval_bias(cfg, opt.events_full, opt.events_nocity,
                                           opt.events_null, opt.bias_margin);
      } else {
        if (opt.manifest_path.empty() || opt.events_path.empty()) {
          std::cerr << "eval requires --manifest and --events (or --bias mode)\n";
          return kExitUserError;
        }
        sentigrid::pipeline::cmd_eval_detection(cfg, opt.manifest_path, opt.events_path);
      }
    }
  } catch (const sentigrid::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUserError;
  } catch (const sentigrid::InternalError& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kExitInternalError;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kExitInternalError;
  }
  return kExitOk;
}
