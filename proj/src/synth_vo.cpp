#include "motionhint/synth_vo.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace motionhint {

namespace {

constexpr double kPi = std::numbers::pi;

// SplitMix64 finalizer; used to derive independent seeds.
std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double smoothstep(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

Matrix3d body_rotation(double yaw, double pitch) {
  return (Eigen::AngleAxisd(yaw, Vector3d::UnitZ()) * Eigen::AngleAxisd(-pitch, Vector3d::UnitY()))
      .toRotationMatrix();
}

}  // namespace

std::size_t MotionProfile::frames() const {
  std::size_t n = 1;
  for (const MotionSegment& s : segments) n += s.frames;
  return n;
}

MotionFamily parse_motion_family(const std::string& s) {
  if (s == "urban") return MotionFamily::kUrban;
  if (s == "highway") return MotionFamily::kHighway;
  if (s == "figure_eight") return MotionFamily::kFigureEight;
  throw InvalidArgumentError("unknown motion family '" + s + "'");
}

std::string to_string(MotionFamily f) {
  switch (f) {
    case MotionFamily::kUrban: return "urban";
    case MotionFamily::kHighway: return "highway";
    case MotionFamily::kFigureEight: return "figure_eight";
  }
  return "unknown";
}

MotionProfile random_profile(MotionFamily family, std::uint64_t seed, std::size_t min_frames) {
  std::mt19937_64 rng(mix_seed(seed));
  auto uniform = [&](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  auto uniform_int = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  auto sign = [&] { return uniform(0.0, 1.0) < 0.5 ? -1.0 : 1.0; };

  MotionProfile p;
  p.name = to_string(family);
  p.seed = mix_seed(seed ^ 0x5bd1e995ULL);
  switch (family) {
    case MotionFamily::kUrban:
      // Stop-and-go driving with right-angle turns.
      p.speed_jitter = 0.01;
      p.yaw_jitter = 3e-4;
      p.segments.push_back({uniform_int(40, 80), uniform(0.6, 1.2), 0.0, 0.0});
      while (p.frames() < min_frames) {
        const double u = uniform(0.0, 1.0);
        if (u < 0.45) {
          p.segments.push_back({uniform_int(40, 100), uniform(0.6, 1.2), 0.0, 0.0});
        } else if (u < 0.8) {
          const std::size_t n = uniform_int(20, 30);
          p.segments.push_back({n, uniform(0.35, 0.6), sign() * kPi / 2.0 / n, 0.0});
        } else {
          p.segments.push_back({uniform_int(10, 30), 0.0, 0.0, 0.0});
        }
      }
      break;
    case MotionFamily::kHighway:
      // Fast, gently curving motion with mild grade changes.
      p.speed_jitter = 0.005;
      p.yaw_jitter = 1e-4;
      while (p.frames() < min_frames) {
        const double yaw = uniform(0.0, 1.0) < 0.4 ? 0.0 : sign() * uniform(0.0005, 0.004);
        p.segments.push_back(
            {uniform_int(60, 150), uniform(2.0, 2.8), yaw, sign() * uniform(0.0, 3e-4)});
      }
      break;
    case MotionFamily::kFigureEight: {
      // Alternating full loops at constant speed.
      p.speed_jitter = 0.005;
      p.yaw_jitter = 2e-4;
      const double speed = uniform(0.8, 1.1);
      const std::size_t loop = uniform_int(150, 250);
      const double rate = 2.0 * kPi / static_cast<double>(loop);
      double dir = sign();
      while (p.frames() < min_frames) {
        p.segments.push_back({loop, speed, dir * rate, 0.0});
        dir = -dir;
      }
      break;
    }
  }
  return p;
}

Trajectory generate_trajectory(const MotionProfile& profile) {
  std::mt19937_64 rng(profile.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Trajectory traj;
  traj.frame_period = profile.frame_period;
  traj.poses.reserve(profile.frames());
  traj.poses.push_back(Pose6d::Zero());

  Vector3d position = Vector3d::Zero();
  double yaw = 0.0, pitch = 0.0;
  MotionSegment previous = profile.segments.empty() ? MotionSegment{} : profile.segments.front();
  for (const MotionSegment& seg : profile.segments) {
    for (std::size_t i = 0; i < seg.frames; ++i) {
      const double blend = profile.ramp_frames == 0
                               ? 1.0
                               : smoothstep(static_cast<double>(i + 1) /
                                            static_cast<double>(profile.ramp_frames));
      const double speed = std::max(
          0.0, (previous.speed + blend * (seg.speed - previous.speed)) *
                   (1.0 + profile.speed_jitter * normal(rng)));
      yaw += previous.yaw_rate + blend * (seg.yaw_rate - previous.yaw_rate) +
             profile.yaw_jitter * normal(rng);
      pitch += previous.pitch_rate + blend * (seg.pitch_rate - previous.pitch_rate);
      pitch = std::clamp(pitch, -0.2, 0.2);
      yaw = std::remainder(yaw, 2.0 * kPi);
      const Matrix3d r = body_rotation(yaw, pitch);
      position += speed * r.col(0);
      traj.poses.push_back({position, rotation_log_any(r)});
    }
    previous = seg;
  }
  return traj;
}

void NoiseModel::validate() const {
  if (!(sigma_t >= 0.0) || !(sigma_r >= 0.0)) {
    throw InvalidArgumentError("noise standard deviations must be non-negative");
  }
  if (!(scale_drift > 0.0) || !(global_scale > 0.0)) {
    throw InvalidArgumentError("scale drift and global scale must be positive");
  }
  for (const BiasSegment& b : bias) {
    if (b.first > b.last) throw InvalidArgumentError("bias segment ends before it starts");
    if (!b.offset.allFinite()) throw InvalidArgumentError("bias offset must be finite");
  }
}

Trajectory corrupt(const Trajectory& gt, const NoiseModel& noise, std::uint64_t seed) {
  noise.validate();
  if (gt.empty()) return gt;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<Pose6d> steps = relative_steps(gt);
  double drift = 1.0;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    Vector6d v = steps[i].vector();
    for (const BiasSegment& b : noise.bias) {
      if (i >= b.first && i < b.last) v += b.offset;
    }
    for (int j = 0; j < 3; ++j) v(j) += noise.sigma_t * normal(rng);
    for (int j = 3; j < 6; ++j) v(j) += noise.sigma_r * normal(rng);
    v.head<3>() *= noise.global_scale * drift;
    steps[i] = Pose6d::FromVector(v);
    drift *= noise.scale_drift;
  }
  const Pose6d start{noise.global_scale * gt[0].t, gt[0].r};
  return chain_steps(start, steps, gt.frame_period);
}

Corrector Corrector::Zero(std::size_t steps, std::size_t segment_length) {
  if (segment_length == 0) throw InvalidArgumentError("corrector segment length must be positive");
  Corrector c;
  c.segment_length = segment_length;
  const std::size_t n = (steps + segment_length - 1) / segment_length;
  c.params = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n * kParamsPerSegment));
  return c;
}

std::vector<Pose6d> Corrector::apply(const std::vector<Pose6d>& steps) const {
  std::vector<Pose6d> out(steps.size());
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const auto p = params.segment<kParamsPerSegment>(
        static_cast<Eigen::Index>(segment_of(i) * kParamsPerSegment));
    out[i].t = std::exp(p(6)) * steps[i].t + p.head<3>();
    out[i].r = steps[i].r + p.segment<3>(3);
  }
  return out;
}

Eigen::VectorXd Corrector::backprop(const std::vector<Pose6d>& steps,
                                    const std::vector<Vector6d>& grad_steps) const {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(params.size());
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const auto base = static_cast<Eigen::Index>(segment_of(i) * kParamsPerSegment);
    g.segment<6>(base) += grad_steps[i];
    g(base + 6) += grad_steps[i].head<3>().dot(std::exp(params(base + 6)) * steps[i].t);
  }
  return g;
}

double origin_loss(const std::vector<Pose6d>& corrected, const std::vector<Pose6d>& input,
                   std::vector<Vector6d>* grad) {
  if (corrected.size() != input.size()) throw InvalidArgumentError("step counts differ");
  if (grad) grad->assign(corrected.size(), Vector6d::Zero());
  double loss = 0.0;
  for (std::size_t i = 0; i < corrected.size(); ++i) {
    const Vector6d d = corrected[i].vector() - input[i].vector();
    loss += d.squaredNorm();
    if (grad) (*grad)[i] = 2.0 * d;
  }
  return loss;
}

void RefineConfig::validate() const {
  if (window < 2) throw InvalidArgumentError("window must be at least 2");
  if (segment_length == 0) throw InvalidArgumentError("segment length must be positive");
  if (!(adam.learning_rate > 0.0)) throw InvalidArgumentError("learning rate must be positive");
  if (!(lambda >= 0.0)) throw InvalidArgumentError("lambda must be non-negative");
  if (!(origin_floor > 0.0)) throw InvalidArgumentError("origin floor must be positive");
  confidence.validate();
}

std::vector<PseudoLabel> pseudo_labels(const PPnetParams& model, const Trajectory& traj,
                                       const ConfidenceParams& cp, std::size_t window) {
  std::vector<PseudoLabel> labels(traj.size() > 0 ? traj.size() - 1 : 0);
  PoseManager manager(window + 1);
  for (std::size_t t = 0; t < traj.size(); ++t) {
    if (t > 0) labels[t - 1] = pseudo_label(model, manager, cp, window);
    manager.record_pose(t, traj[t]);
  }
  return labels;
}

RefineResult refine(const Trajectory& noisy, const PPnetParams& model, const RefineConfig& cfg) {
  cfg.validate();
  if (noisy.size() < 2) throw InvalidArgumentError("refine needs at least two poses");

  const std::vector<Pose6d> steps = relative_steps(noisy);
  RefineResult res;
  res.corrector = Corrector::Zero(steps.size(), cfg.segment_length);
  if (cfg.use_motion) {
    res.weights.w = cfg.initial_weights;
    res.weights.lambda = cfg.lambda;
    res.weights.period = cfg.mlra_period;
    res.weights.max_updates = cfg.mlra_max_updates;
  } else {
    res.weights = LossWeights::Fixed(1.0, 0.0);
  }

  AdamState adam;
  std::vector<Vector6d> grad_origin, grad;
  std::vector<PseudoLabel> labels;
  try {
    for (std::size_t it = 0; it <= cfg.iterations; ++it) {
      const std::vector<Pose6d> corrected = res.corrector.apply(steps);
      res.corrected = chain_steps(noisy[0], corrected, noisy.frame_period);

      IterationRecord rec;
      rec.iteration = it;
      rec.l_origin = origin_loss(corrected, steps, &grad_origin);
      grad.assign(steps.size(), Vector6d::Zero());
      if (cfg.use_motion) {
        labels = pseudo_labels(model, res.corrected, cfg.confidence, cfg.window);
        std::size_t ok = 0;
        for (const PseudoLabel& l : labels) {
          if (l.status == LabelStatus::kOk) ++ok;
          if (l.status == LabelStatus::kGated) ++rec.gated;
        }
        rec.supervised = ok;
        if (ok > 0) {
          const double inv = 1.0 / static_cast<double>(ok);
          for (std::size_t i = 0; i < labels.size(); ++i) {
            if (!labels[i].has_value()) continue;
            const Vector6d d = corrected[i].vector() - labels[i].relative.vector();
            const double norm = d.norm();
            rec.l_motion += inv * labels[i].confidence * norm;
            if (norm > 0.0) grad[i] = (inv * labels[i].confidence / norm) * d;
          }
        }
      }
      rec.w_origin = res.weights.w[0];
      rec.w_motion = res.weights.w[1];
      rec.total = combined_loss(rec.l_origin, rec.l_motion, res.weights);
      res.iterations.push_back(rec);
      if (!std::isfinite(rec.total)) {
        throw RefineDivergedError(
            "refinement loss is not finite at iteration " + std::to_string(it), res.iterations);
      }
      if (it == cfg.iterations) break;

      for (std::size_t i = 0; i < steps.size(); ++i) {
        grad[i] = rec.w_origin * grad_origin[i] + rec.w_motion * grad[i];
      }
      const Eigen::VectorXd g = res.corrector.backprop(steps, grad);
      adam_update(res.corrector.params, g, adam, cfg.adam);
      if (cfg.use_motion) {
        res.weights = mlra_update(
            res.weights, {std::max(rec.l_origin, cfg.origin_floor), rec.l_motion}, rec.supervised);
      }
    }
  } catch (const RefineDivergedError&) {
    throw;
  } catch (const InvalidPoseError& e) {
    throw RefineDivergedError(std::string("refinement diverged: ") + e.what(), res.iterations);
  } catch (const NumericError& e) {
    throw RefineDivergedError(std::string("refinement diverged: ") + e.what(), res.iterations);
  }

  if (cfg.use_motion) {
    const std::vector<Pose6d> corrected = relative_steps(res.corrected);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const PseudoLabel& l = labels[i];
      if (l.status == LabelStatus::kInsufficientHistory) continue;
      FrameRecord fr;
      fr.frame = i + 1;
      fr.gated = l.status != LabelStatus::kOk;
      fr.total_uncertainty = l.total_uncertainty;
      fr.confidence = l.confidence;
      if (!fr.gated) fr.l_motion = motion_loss(l.relative, corrected[i], l.confidence);
      res.frames.push_back(fr);
    }
  }
  return res;
}

Fixture build_fixture(const FixtureSpec& spec) {
  Fixture f;
  f.spec = spec;
  f.ground_truth = generate_trajectory(spec.profile);
  f.noisy = corrupt(f.ground_truth, spec.noise, spec.noise_seed);
  return f;
}

std::vector<FixtureSpec> standard_suite() {
  struct Level {
    const char* name;
    double sigma_t, sigma_r, drift, bias;
  };
  const Level levels[] = {
      {"low", 0.01, 5e-4, 1.0, 1.0},
      {"medium", 0.02, 1e-3, 1.0002, 1.5},
      {"high", 0.04, 2e-3, 1.0005, 2.0},
  };
  const MotionFamily families[] = {MotionFamily::kUrban, MotionFamily::kHighway,
                                   MotionFamily::kFigureEight};
  constexpr std::size_t kFrames = 600;
  constexpr double kGlobalScale = 0.1;

  std::vector<FixtureSpec> suite;
  for (std::size_t fi = 0; fi < 3; ++fi) {
    for (std::size_t li = 0; li < 3; ++li) {
      const std::uint64_t id = 1000 + 10 * fi + li;
      FixtureSpec s;
      s.name = to_string(families[fi]) + "_" + levels[li].name;
      s.profile = random_profile(families[fi], id, kFrames);
      s.noise.sigma_t = levels[li].sigma_t;
      s.noise.sigma_r = levels[li].sigma_r;
      s.noise.scale_drift = levels[li].drift;
      s.noise.global_scale = kGlobalScale;
      s.noise_seed = mix_seed(id + 500);

      // Three abrupt systematic offsets: a heading bias and a lateral / forward slip.
      std::mt19937_64 rng(mix_seed(id + 900));
      auto uniform = [&](double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(rng);
      };
      const std::size_t steps = s.profile.frames() - 1;
      const std::size_t slot = steps / 3;
      for (std::size_t k = 0; k < 3; ++k) {
        BiasSegment b;
        const auto len = static_cast<std::size_t>(uniform(30.0, 60.0));
        b.first = k * slot + static_cast<std::size_t>(uniform(20.0, double(slot - len - 5)));
        b.last = b.first + len;
        const double sgn = uniform(0.0, 1.0) < 0.5 ? -1.0 : 1.0;
        b.offset(5) = sgn * 0.006 * levels[li].bias;
        b.offset(1) = -sgn * 0.05 * levels[li].bias;
        b.offset(0) = uniform(-0.05, 0.05) * levels[li].bias;
        s.noise.bias.push_back(b);
      }
      suite.push_back(s);
    }
  }
  return suite;
}

std::vector<Trajectory> training_trajectories(std::size_t per_family, std::size_t frames,
                                              std::uint64_t seed) {
  // Evaluation profiles use seeds below 2^32; training seeds are forced above it.
  std::vector<Trajectory> out;
  const MotionFamily families[] = {MotionFamily::kUrban, MotionFamily::kHighway,
                                   MotionFamily::kFigureEight};
  for (std::size_t i = 0; i < per_family; ++i) {
    for (MotionFamily f : families) {
      const std::uint64_t s =
          mix_seed(seed * 1000003ULL + out.size()) | (std::uint64_t{1} << 40);
      out.push_back(generate_trajectory(random_profile(f, s, frames)));
    }
  }
  return out;
}

std::vector<Trajectory> constant_velocity_trajectories(std::size_t count, std::size_t frames,
                                                       double speed_min, double speed_max,
                                                       std::uint64_t seed) {
  if (!(speed_min >= 0.0) || !(speed_max >= speed_min)) {
    throw InvalidArgumentError("invalid speed range");
  }
  std::mt19937_64 rng(mix_seed(seed));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  constexpr double kBox = 300.0, kJitterT = 0.005, kJitterR = 1e-3;

  std::vector<Trajectory> out;
  for (std::size_t k = 0; k < count; ++k) {
    const double speed = speed_min + (speed_max - speed_min) * unit(rng);
    const double yaw = (2.0 * unit(rng) - 1.0) * 3.0;
    const double pitch = (2.0 * unit(rng) - 1.0) * 0.05;
    const Vector3d start((2.0 * unit(rng) - 1.0) * kBox, (2.0 * unit(rng) - 1.0) * kBox,
                         (2.0 * unit(rng) - 1.0) * kBox * 0.05);
    const Matrix3d r = body_rotation(yaw, pitch);
    const Vector3d rv = rotation_log_any(r);
    Trajectory tr;
    for (std::size_t i = 0; i < frames; ++i) {
      Pose6d p{start + r.col(0) * (speed * static_cast<double>(i)), rv};
      for (int j = 0; j < 3; ++j) {
        p.t(j) += kJitterT * normal(rng);
        p.r(j) += kJitterR * normal(rng);
      }
      tr.poses.push_back(p);
    }
    out.push_back(std::move(tr));
  }
  return out;
}

HarnessModel train_harness_model(const HarnessModelConfig& cfg) {
  const std::uint64_t seed = cfg.train.seed;
  NoiseModel step_noise;
  step_noise.sigma_t = cfg.train_sigma_t;
  step_noise.sigma_r = cfg.train_sigma_r;

  std::vector<Trajectory> data = training_trajectories(cfg.per_family, cfg.frames, seed);
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = corrupt(data[i], step_noise, mix_seed(seed + 7919 * (i + 1)));
  }
  std::vector<Trajectory> val =
      training_trajectories(cfg.validation_per_family, cfg.frames, mix_seed(seed + 99));
  for (std::size_t i = 0; i < val.size(); ++i) {
    NoiseModel nm = step_noise;
    nm.global_scale = cfg.validation_scale;
    val[i] = corrupt(val[i], nm, mix_seed(seed + 104729 * (i + 1)));
  }

  HarnessModel out;
  out.training = train(data, cfg.train, val);
  out.params = out.training.params;
  out.tau = uncertainty_percentile(out.params, out.training.validation, cfg.tau_percentile);
  return out;
}

FixtureComparison compare_on_fixture(const Fixture& fixture, const PPnetParams& model,
                                     const RefineConfig& gated, AlignMode align) {
  FixtureComparison c;
  c.name = fixture.spec.name;
  const Trajectory& gt = fixture.ground_truth;
  c.ate_noisy = ate(fixture.noisy, gt, align);

  RefineConfig base = gated;
  base.use_motion = false;
  c.ate_baseline = ate(refine(fixture.noisy, model, base).corrected, gt, align);

  const RefineResult g = refine(fixture.noisy, model, gated);
  c.ate_gated = ate(g.corrected, gt, align);
  for (const FrameRecord& f : g.frames) c.gated_frames += f.gated ? 1 : 0;

  RefineConfig ungated = gated;
  ungated.confidence.tau = std::numeric_limits<double>::infinity();
  ungated.confidence.weight_by_uncertainty = false;
  c.ate_ungated = ate(refine(fixture.noisy, model, ungated).corrected, gt, align);
  return c;
}

}  // namespace motionhint
