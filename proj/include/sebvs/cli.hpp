#pragma once

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "sebvs/config.hpp"
#include "sebvs/dataset.hpp"
#include "sebvs/dvs.hpp"
#include "sebvs/eval.hpp"
#include "sebvs/image.hpp"
#include "sebvs/recorder.hpp"
#include "sebvs/trainer.hpp"
#include "sebvs/vit.hpp"

namespace sebvs::cli {

namespace fs = std::filesystem;

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << text;
  if (!f) throw IoError("write failed for '" + path + "'");
}

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
}

inline void ensure_parent(const std::string& file) {
  const auto parent = fs::path(file).parent_path();
  if (!parent.empty()) ensure_dir(parent.string());
}

// Resolved config plus the invocation, so a run can be repeated from it.
inline void write_snapshot(const std::string& path, const cfg::RunConfig& c, const std::string& command) {
  ensure_parent(path);
  write_text(path, "# " + command + "\n" + c.snapshot());
}

struct Common {
  std::string cfg_file;
  std::vector<std::string> overrides;

  void attach(CLI::App* app) {
    app->add_option("--cfg", cfg_file, "Config file of [section] key = value lines");
    app->add_option("--set", overrides, "Override one config key, e.g. --set train.epochs=5")->take_all();
  }
  cfg::RunConfig resolve() const {
    cfg::RunConfig c;
    if (!cfg_file.empty()) c.load_file(cfg_file);
    for (const auto& kv : overrides) c.apply_override(kv);
    return c;
  }
};

inline std::string join_args(int argc, const char* const* argv) {
  std::string s = "sebvs";
  for (int i = 1; i < argc; ++i) {
    s += " ";
    s += argv[i];
  }
  return s;
}

inline std::vector<std::string> list_frames(const std::string& dir) {
  if (!fs::is_directory(dir)) throw InputError("'" + dir + "' is not a directory");
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto ext = e.path().extension().string();
    if (e.is_regular_file() && (ext == ".pgm" || ext == ".ppm")) out.push_back(e.path().string());
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw InputError("no .pgm/.ppm frames in '" + dir + "'");
  return out;
}

inline data::SampleStore load_dir(const std::string& dir) {
  if (!fs::is_directory(dir)) throw InputError("'" + dir + "' is not a directory");
  const auto files = data::list_episode_files(dir);
  if (files.empty()) throw EmptyDatasetError("no .ebvs episodes in '" + dir + "'");
  return data::SampleStore::load_concat(files);
}

inline void check_store(const data::SampleStore& store, data::Task task, const cfg::RunConfig& c) {
  const auto& h = store.header();
  if (h.task != task)
    throw IncompatibleError(std::string("dataset task is ") + data::task_name(h.task) + ", expected " +
                            data::task_name(task));
  const auto res = c.get_int("sensor.res");
  if (h.width != res || h.height != res)
    throw IncompatibleError("dataset resolution " + std::to_string(h.width) + "x" + std::to_string(h.height) +
                            " differs from sensor.res " + std::to_string(res));
}

inline vit::PolicyParams<float> load_policy(const std::string& path, data::Task task, const std::string& modality,
                                            const cfg::RunConfig& c) {
  auto p = vit::load_checkpoint<float>(path);
  const auto want_head = task == data::Task::Nav ? vit::Head::Nav : vit::Head::Arm;
  if (p.cfg.head != want_head) throw ConfigError("checkpoint '" + path + "' was trained for the other task");
  if (!modality.empty() && vit::parse_modality(modality) != p.cfg.modality)
    throw ConfigError("checkpoint modality is " + std::string(vit::modality_name(p.cfg.modality)) +
                      ", --modality says " + modality);
  if (p.cfg.input_res != c.get_int("sensor.res"))
    throw ConfigError("checkpoint input_res " + std::to_string(p.cfg.input_res) + " differs from sensor.res");
  return p;
}

inline std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = cfg::trim(item);
    if (item.empty()) continue;
    try {
      std::size_t pos = 0;
      out.push_back(std::stoull(item, &pos));
      if (pos != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("--seeds: '" + item + "' is not a non-negative integer");
    }
  }
  if (out.empty()) throw ConfigError("--seeds must list at least one seed");
  return out;
}

/// Parses argv and runs the selected subcommand. Returns the process exit code:
/// 0 success, 1 runtime failure, 2 usage error. Errors are one line on `err`.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Event-based visual servoing toolkit: DVS emulation, simulated demonstrations, transformer "
               "behavior cloning and closed-loop evaluation.",
               "sebvs"};
  app.require_subcommand(1);
  const std::string command = join_args(argc, argv);

  // emulate
  Common emu_c;
  std::string emu_in, emu_out;
  auto* emulate = app.add_subcommand("emulate", "Convert numbered PGM/PPM frames into an EVT1 event file");
  emulate->add_option("--in", emu_in, "Directory of numbered frames")->required();
  emulate->add_option("--out", emu_out, "Output EVT1 file")->required();
  emu_c.attach(emulate);

  // gen-data
  Common gen_c;
  std::string gen_task, gen_out;
  int gen_episodes = 10;
  std::uint64_t gen_seed = 0;
  auto* gen = app.add_subcommand("gen-data", "Record expert demonstrations");
  gen->add_option("--task", gen_task, "nav|arm")->required()->check(CLI::IsMember({"nav", "arm"}));
  gen->add_option("--episodes", gen_episodes, "Number of episodes")->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "Base seed");
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen_c.attach(gen);

  // train
  Common tr_c;
  std::string tr_task, tr_mod = "fused", tr_data, tr_out, tr_report;
  std::uint64_t tr_seed = 0;
  auto* trn = app.add_subcommand("train", "Behavior-cloning training of a policy");
  trn->add_option("--task", tr_task, "nav|arm")->required()->check(CLI::IsMember({"nav", "arm"}));
  trn->add_option("--modality", tr_mod, "rgb|event|fused")->check(CLI::IsMember({"rgb", "event", "fused"}));
  trn->add_option("--data", tr_data, "Dataset directory")->required();
  trn->add_option("--out", tr_out, "Output checkpoint file")->required();
  trn->add_option("--report", tr_report, "Per-epoch loss CSV");
  trn->add_option("--seed", tr_seed, "Seed for init, split, shuffling and dropout");
  tr_c.attach(trn);

  // eval
  Common ev_c;
  std::string ev_task, ev_ckpt, ev_baseline, ev_mod, ev_csv, ev_trace, ev_scenario;
  int ev_episodes = 5;
  std::uint64_t ev_seed = 0;
  auto* evl = app.add_subcommand("eval", "Closed-loop (nav) or single-shot (arm) evaluation");
  evl->add_option("--task", ev_task, "nav|arm")->required()->check(CLI::IsMember({"nav", "arm"}));
  auto* ck = evl->add_option("--ckpt", ev_ckpt, "Policy checkpoint");
  auto* bl = evl->add_option("--baseline", ev_baseline, "expert|zero (nav) or oracle (arm) instead of a checkpoint")
                 ->check(CLI::IsMember({"expert", "zero", "oracle"}));
  ck->excludes(bl);
  bl->excludes(ck);
  evl->add_option("--modality", ev_mod, "Expected checkpoint modality")->check(CLI::IsMember({"rgb", "event", "fused"}));
  evl->add_option("--episodes", ev_episodes, "Episodes (nav) or trials (arm)")->check(CLI::PositiveNumber);
  evl->add_option("--seed", ev_seed, "Evaluation seed");
  evl->add_option("--csv", ev_csv, "Metrics CSV");
  evl->add_option("--trace", ev_trace, "Per-frame (nav) or per-trial (arm) CSV log");
  evl->add_option("--scenario", ev_scenario, "single|multi (arm)")->check(CLI::IsMember({"single", "multi"}));
  ev_c.attach(evl);

  // compare
  Common cmp_c;
  std::string cmp_nav, cmp_arm, cmp_seeds = "0,1,2", cmp_out, cmp_scenario;
  int cmp_episodes = 5;
  auto* cmp = app.add_subcommand("compare", "Train and evaluate rgb/event/fused under identical seeds");
  cmp->add_option("--nav-data", cmp_nav, "Navigation dataset directory");
  cmp->add_option("--arm-data", cmp_arm, "Arm dataset directory");
  cmp->add_option("--seeds", cmp_seeds, "Comma-separated seeds");
  cmp->add_option("--episodes", cmp_episodes, "Eval episodes (nav) or trials (arm) per seed")
      ->check(CLI::PositiveNumber);
  cmp->add_option("--scenario", cmp_scenario, "single|multi (arm)")->check(CLI::IsMember({"single", "multi"}));
  cmp->add_option("--out", cmp_out, "Output directory")->required();
  cmp_c.attach(cmp);

  // inspect
  std::string insp_file;
  auto* insp = app.add_subcommand("inspect", "Describe an .ebvs episode, policy checkpoint or EVT1 file");
  insp->add_option("file", insp_file, "File to inspect")->required();

  // stats
  Common st_c;
  std::string st_data, st_out;
  int st_bins = 20;
  auto* sts = app.add_subcommand("stats", "Action histograms and per-episode summaries as CSV");
  sts->add_option("--data", st_data, "Dataset directory")->required();
  sts->add_option("--out", st_out, "Output directory")->required();
  sts->add_option("--bins", st_bins, "Histogram bins per action dimension")->check(CLI::PositiveNumber);
  st_c.attach(sts);

  // rollout
  Common ro_c;
  std::string ro_out, ro_ckpt;
  bool ro_render = false;
  std::uint64_t ro_seed = 0;
  double ro_seconds = 0;
  auto* ro = app.add_subcommand("rollout", "Drive one navigation episode and dump ground truth (and frames)");
  ro->add_flag("--render", ro_render, "Also write every frame as PPM");
  ro->add_option("--out", ro_out, "Output directory")->required();
  ro->add_option("--ckpt", ro_ckpt, "Drive with this policy instead of the expert");
  ro->add_option("--seed", ro_seed, "Scene seed");
  ro->add_option("--seconds", ro_seconds, "Duration (default eval.nav_horizon_s)");
  ro_c.attach(ro);

  // export
  std::string ex_in, ex_out;
  bool ex_csv = false;
  auto* exp = app.add_subcommand("export", "Export an .ebvs episode as CSV");
  exp->add_flag("--csv", ex_csv, "CSV output (the only format)")->required();
  exp->add_option("--in", ex_in, "Episode file")->required();
  exp->add_option("--out", ex_out, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    // Unknown flags take precedence over missing required ones.
    const std::vector<std::string> extra = app.remaining(true);
    if (!extra.empty()) {
      msg = "unrecognized argument(s):";
      for (const auto& a : extra) msg += " " + a;
    }
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    err << "error: usage: " << msg << "\n";
    return 2;
  }

  try {
    if (emulate->parsed()) {
      const auto c = emu_c.resolve();
      auto ecfg = cfg::emulator(c);
      const double fps = c.get_double("emulate.fps");
      if (!(fps > 0)) throw ConfigError("emulate.fps must be > 0");
      const auto frames = list_frames(emu_in);
      auto first = read_pnm(frames[0]);
      auto state = dvs::init_emulator(ecfg, first.width, first.height);
      std::vector<dvs::Event> all;
      for (std::size_t i = 0; i < frames.size(); ++i) {
        const auto img = i == 0 ? first : read_pnm(frames[i]);
        const auto t = static_cast<std::int64_t>(std::llround(static_cast<double>(i) * 1e6 / fps));
        auto batch = dvs::emit_events(state, img, t);
        all.insert(all.end(), batch.events.begin(), batch.events.end());
      }
      ensure_parent(emu_out);
      write_file_bytes(emu_out, dvs::encode_evt1(state.width, state.height, all));
      write_snapshot(emu_out + ".config.ini", c, command);
      out << "frames " << frames.size() << " events " << all.size() << " size " << state.width << "x"
          << state.height << "\n";
      return 0;
    }

    if (gen->parsed()) {
      const auto c = gen_c.resolve();
      const auto task = data::parse_task(gen_task);
      ensure_dir(gen_out);
      const auto digest = c.digest();
      std::size_t total = 0;
      if (task == data::Task::Nav) {
        const auto run = cfg::nav_run(c, false);
        for (int e = 0; e < gen_episodes; ++e) {
          const auto ep = rec::record_nav_episode(run, rec::derive_seed(gen_seed, 0, e), digest);
          data::write_episode((fs::path(gen_out) / rec::episode_filename(e)).string(), ep.header, ep.records);
          total += ep.records.size();
        }
      } else {
        const auto run = cfg::arm_run(c);
        for (int e = 0; e < gen_episodes; ++e) {
          const auto ep = rec::record_arm_episode(run, rec::derive_seed(gen_seed, 0, e), e, digest);
          data::write_episode((fs::path(gen_out) / rec::episode_filename(e)).string(), ep.header, ep.records);
          total += ep.records.size();
        }
      }
      write_snapshot((fs::path(gen_out) / "config.ini").string(), c, command);
      out << "episodes " << gen_episodes << " steps " << total << "\n";
      return 0;
    }

    if (trn->parsed()) {
      const auto c = tr_c.resolve();
      const auto task = data::parse_task(tr_task);
      const auto mod = vit::parse_modality(tr_mod);
      const auto store = load_dir(tr_data);
      check_store(store, task, c);
      const auto pc = cfg::policy(c, task, mod, tr_seed);
      const auto tc = cfg::training(c, task, tr_seed);
      train::StoreSamples src(store, mod, cfg::normalizer(c, task), cfg::clip(c),
                              task == data::Task::Arm ? cfg::arm_stride(c) : 1);
      const auto res = train::train<float>(pc, tc, src);
      ensure_parent(tr_out);
      vit::save_checkpoint(tr_out, res.params);
      if (!tr_report.empty()) {
        ensure_parent(tr_report);
        write_text(tr_report, res.report.to_csv());
      }
      write_snapshot(tr_out + ".config.ini", c, command);
      out << "epochs " << res.report.stop_epoch << " best_epoch " << res.report.best_epoch << " best_val "
          << res.report.best_val << "\n";
      return 0;
    }

    if (evl->parsed()) {
      const auto c = ev_c.resolve();
      const auto task = data::parse_task(ev_task);
      if (ev_ckpt.empty() && ev_baseline.empty()) throw ConfigError("eval needs --ckpt or --baseline");
      std::string metrics, trace;
      if (task == data::Task::Nav) {
        const auto ecfg = cfg::nav_eval(c);
        std::unique_ptr<eval::NavController> ctl;
        vit::PolicyParams<float> params;
        if (!ev_ckpt.empty()) {
          params = load_policy(ev_ckpt, task, ev_mod, c);
          ctl = std::make_unique<eval::PolicyNavController>(params, cfg::normalizer(c, task), ecfg.clip);
        } else if (ev_baseline == "expert") {
          ctl = std::make_unique<eval::ExpertController>(ecfg.run.expert);
        } else if (ev_baseline == "zero") {
          ctl = std::make_unique<eval::ZeroController>();
        } else {
          throw ConfigError("baseline '" + ev_baseline + "' is not available for nav (expert|zero)");
        }
        const auto r = eval::rollout_nav(*ctl, ecfg, ev_episodes, ev_seed);
        metrics = eval::nav_metrics_csv(r.metrics);
        trace = eval::nav_frames_csv(r.frames);
      } else {
        const auto ecfg = cfg::arm_eval(c);
        const auto scenario = cfg::parse_scenario(ev_scenario.empty() ? c.get("eval.arm_scenario") : ev_scenario);
        std::unique_ptr<eval::ArmPredictor> pred;
        vit::PolicyParams<float> params;
        if (!ev_ckpt.empty()) {
          params = load_policy(ev_ckpt, task, ev_mod, c);
          pred = std::make_unique<eval::PolicyArmPredictor>(params, cfg::normalizer(c, task), ecfg.clip);
        } else if (ev_baseline == "oracle") {
          pred = std::make_unique<eval::OracleArmPredictor>(ecfg.run.oracle);
        } else {
          throw ConfigError("baseline '" + ev_baseline + "' is not available for arm (oracle)");
        }
        const auto r = eval::eval_arm(*pred, ecfg, scenario, ev_episodes, ev_seed);
        metrics = eval::arm_metrics_csv(r.metrics);
        trace = eval::arm_trials_csv(r.trials);
      }
      out << metrics;
      if (!ev_csv.empty()) {
        ensure_parent(ev_csv);
        write_text(ev_csv, metrics);
        write_snapshot(ev_csv + ".config.ini", c, command);
      }
      if (!ev_trace.empty()) {
        ensure_parent(ev_trace);
        write_text(ev_trace, trace);
      }
      return 0;
    }

    if (cmp->parsed()) {
      const auto c = cmp_c.resolve();
      if (cmp_nav.empty() && cmp_arm.empty()) throw ConfigError("compare needs --nav-data and/or --arm-data");
      ensure_dir(cmp_out);
      eval::CompareBudget b;
      b.seeds = parse_seeds(cmp_seeds);
      b.eval_episodes = cmp_episodes;
      if (!cmp_nav.empty()) {
        const auto store = load_dir(cmp_nav);
        check_store(store, data::Task::Nav, c);
        b.policy = cfg::policy(c, data::Task::Nav, vit::Modality::Fused, 0);
        b.train = cfg::training(c, data::Task::Nav, 0);
        const auto rows = eval::compare_nav(store, cfg::nav_eval(c), cfg::normalizer(c, data::Task::Nav), b);
        const auto csv = eval::compare_nav_csv(rows);
        write_text((fs::path(cmp_out) / "compare_nav.csv").string(), csv);
        out << csv;
      }
      if (!cmp_arm.empty()) {
        const auto store = load_dir(cmp_arm);
        check_store(store, data::Task::Arm, c);
        b.policy = cfg::policy(c, data::Task::Arm, vit::Modality::Fused, 0);
        b.train = cfg::training(c, data::Task::Arm, 0);
        b.arm_stride = cfg::arm_stride(c);
        const auto scenario = cfg::parse_scenario(cmp_scenario.empty() ? c.get("eval.arm_scenario") : cmp_scenario);
        const auto rows =
            eval::compare_arm(store, cfg::arm_eval(c), cfg::normalizer(c, data::Task::Arm), b, scenario);
        const auto csv = eval::compare_arm_csv(rows);
        write_text((fs::path(cmp_out) / "compare_arm.csv").string(), csv);
        out << csv;
      }
      write_snapshot((fs::path(cmp_out) / "config.ini").string(), c, command);
      return 0;
    }

    if (insp->parsed()) {
      const auto bytes = read_file_bytes(insp_file);
      const std::string magic(bytes.begin(), bytes.begin() + std::min<std::size_t>(4, bytes.size()));
      if (magic == "EBVS") {
        const auto ep = data::decode_episode(bytes, insp_file);
        const auto& h = ep.header;
        std::uint64_t on = 0, off = 0;
        for (const auto& r : ep.records) {
          for (auto v : r.ev_on) on += v;
          for (auto v : r.ev_off) off += v;
        }
        out << "format: episode\ntask: " << data::task_name(h.task) << "\nsize: " << h.width << "x" << h.height
            << "\naction_dim: " << h.action_dim << "\nsteps: " << h.step_count << "\ncontrol_dt_us: "
            << h.control_dt_us << "\nscale_offset: " << h.scale_offset.sx << " " << h.scale_offset.sy << " "
            << h.scale_offset.ox << " " << h.scale_offset.oy << "\nconfig_digest: " << std::hex << h.config_digest
            << std::dec << "\non_events: " << on << "\noff_events: " << off << "\n";
      } else if (magic == "EBVP") {
        const auto p = vit::decode_checkpoint<float>(bytes, insp_file);
        const auto& pc = p.cfg;
        out << "format: checkpoint\nhead: " << (pc.head == vit::Head::Nav ? "nav" : "arm")
            << "\nmodality: " << vit::modality_name(pc.modality) << "\ninput_res: " << pc.input_res
            << "\npatch: " << pc.patch << "\nembed_dim: " << pc.embed_dim << "\nheads: " << pc.heads
            << "\nffn_dim: " << pc.ffn_dim << "\ndepth: " << pc.depth << "\ndropout: " << pc.dropout_p
            << "\nactivation: " << vit::activation_name(pc.activation) << "\nparameters: " << p.parameter_count()
            << "\n";
        p.visit([&](const std::string& name, const vit::Mat<float>& m) {
          out << "tensor " << name << " " << m.rows() << "x" << m.cols() << "\n";
        });
      } else if (magic == "EVT1") {
        const auto f = dvs::decode_evt1(bytes, insp_file);
        std::size_t on = 0;
        for (const auto& e : f.events) on += e.p > 0;
        out << "format: events\nsize: " << f.width << "x" << f.height << "\nevents: " << f.events.size()
            << "\non: " << on << "\noff: " << f.events.size() - on << "\n";
        if (!f.events.empty())
          out << "t_first_us: " << f.events.front().t << "\nt_last_us: " << f.events.back().t << "\n";
      } else {
        throw FormatError(insp_file + ": unrecognized magic");
      }
      return 0;
    }

    if (sts->parsed()) {
      const auto c = st_c.resolve();
      const auto store = load_dir(st_data);
      const auto s = data::stats(store, cfg::normalizer(c, store.header().task), st_bins);
      ensure_dir(st_out);
      write_text((fs::path(st_out) / "histograms.csv").string(), s.histogram_csv);
      write_text((fs::path(st_out) / "episodes.csv").string(), s.episodes_csv);
      write_snapshot((fs::path(st_out) / "config.ini").string(), c, command);
      out << "episodes " << store.episode_count() << " samples " << store.size() << "\n";
      return 0;
    }

    if (ro->parsed()) {
      const auto c = ro_c.resolve();
      auto ecfg = cfg::nav_eval(c);
      if (ro_seconds > 0) ecfg.run.horizon_s = ro_seconds;
      ensure_dir(ro_out);
      std::unique_ptr<eval::NavController> ctl;
      vit::PolicyParams<float> params;
      if (!ro_ckpt.empty()) {
        params = load_policy(ro_ckpt, data::Task::Nav, "", c);
        ctl = std::make_unique<eval::PolicyNavController>(params, cfg::normalizer(c, data::Task::Nav), ecfg.clip);
      } else {
        ctl = std::make_unique<eval::ExpertController>(ecfg.run.expert);
      }
      auto scene = sim::make_nav_scene(ecfg.run.scene, rec::derive_seed(ro_seed, 1));
      auto emu = ecfg.run.emulator;
      emu.seed = rec::derive_seed(ro_seed, 2);
      rec::EventSensor sensor(emu, ecfg.run.res);
      ctl->reset(rec::derive_seed(ro_seed, 3));
      std::ostringstream csv;
      csv.precision(9);
      csv << "t,robot_x,robot_y,robot_theta,target_x,target_y,visible,centroid_x,centroid_y,bbox_width,v,omega\n";
      const double dt = ecfg.run.dt();
      const int steps = ecfg.run.steps();
      for (int k = 0; k < steps; ++k) {
        const auto nf = sim::render_nav(scene, ecfg.run.res);
        const auto ef = sensor.observe(nf.frame, k * ecfg.run.dt_us());
        if (ro_render) {
          char name[32];
          std::snprintf(name, sizeof name, "frame_%05d.ppm", k);
          write_ppm((fs::path(ro_out) / name).string(), nf.frame);
        }
        const auto u = ctl->act(nf.frame, ef, nf.truth, dt).clamped(ecfg.run.expert.v_max, ecfg.run.expert.omega_max);
        const auto& g = nf.truth;
        csv << k * dt << "," << scene.robot.x << "," << scene.robot.y << "," << scene.robot.theta << ","
            << scene.target_x << "," << scene.target_y << "," << g.visible << "," << g.centroid_x << ","
            << g.centroid_y << "," << g.bbox_width << "," << u.v << "," << u.omega << "\n";
        scene.robot = sim::step_unicycle(scene.robot, u, dt);
        scene = sim::step_nav_scene(scene, dt);
      }
      write_text((fs::path(ro_out) / "truth.csv").string(), csv.str());
      write_snapshot((fs::path(ro_out) / "config.ini").string(), c, command);
      out << "steps " << steps << "\n";
      return 0;
    }

    if (exp->parsed()) {
      const auto ep = data::read_episode(ex_in);
      std::ostringstream csv;
      csv.precision(9);
      csv << "step,t_us";
      for (std::size_t i = 0; i < ep.header.action_dim; ++i) csv << ",action" << i;
      for (std::size_t i = 0; i < data::aux_dim(ep.header.task); ++i) csv << ",aux" << i;
      csv << ",on_events,off_events\n";
      for (std::size_t k = 0; k < ep.records.size(); ++k) {
        const auto& r = ep.records[k];
        csv << k << "," << r.t;
        for (float v : r.action) csv << "," << v;
        for (float v : r.aux) csv << "," << v;
        std::uint64_t on = 0, off = 0;
        for (auto v : r.ev_on) on += v;
        for (auto v : r.ev_off) off += v;
        csv << "," << on << "," << off << "\n";
      }
      ensure_parent(ex_out);
      write_text(ex_out, csv.str());
      return 0;
    }
  } catch (const Error& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    err << "error: " << e.kind() << ": " << msg << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    err << "error: internal: " << msg << "\n";
    return 1;
  }
  return 0;
}

}  // namespace sebvs::cli
