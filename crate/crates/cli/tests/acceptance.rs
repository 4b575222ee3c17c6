//! Acceptance suite: one PASS/FAIL line per criterion, each checked against an
//! oracle written here rather than against the library's own bookkeeping.
//!
//! Run with `cargo test -p shotpose-cli --test acceptance`. The process exits
//! non-zero when a criterion fails, except the ones listed in `KNOWN_RED`,
//! which are reported as FAIL with an explanation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shotpose::analysis::{kmeans_fit, label_agreement, pca_fit, tsne_embed, TsneConfig};
use shotpose::dataset::{BoundingBox, JointMap, Keypoint2D, Pose2D, Pose3D, Side, NUM_JOINTS, SEQ_LEN};
use shotpose::grae::{train, GraeConfig, GraeModel};
use shotpose::kinematics::{ankle_travel, knee_angle, normalize, NormalizedSequence};
use shotpose::metrics::{
    detection_pr_ap, hota, iou, pdj, selection_metrics, DetectionFrame, ScoredBox, ScoredTracklet, SelectionClip, TrackSet,
};
use shotpose::synthetic::{labelled_sequences, shot_sequence, Style};
use shotpose::tensor::{Tape, Tensor, Var};
use shotpose_cli::commands::cmd_run;
use shotpose_cli::RunConfig;

/// Criteria whose stated expectation conflicts with the definition being implemented.
const KNOWN_RED: &[&str] = &["hota"];

struct Outcome {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn check(id: &'static str, budget: Option<Duration>, f: impl FnOnce() -> Result<String, String>) -> Outcome {
    let start = Instant::now();
    let result = f();
    let took = start.elapsed();
    let (mut pass, mut detail) = match result {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    if let Some(b) = budget {
        if took > b {
            pass = false;
            detail = format!("{detail}; exceeded {:.0} s budget", b.as_secs_f64());
        }
    }
    println!("{} {id:<14} [{:>6.1} s] {detail}", if pass { "PASS" } else { "FAIL" }, took.as_secs_f64());
    Outcome { id, pass, detail }
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

// ---------------------------------------------------------------- gradients

/// Compares reverse-mode gradients of `f` with central differences (h = 1e-5).
fn grad_check(inputs: &[Tensor], f: &dyn Fn(&mut Tape, &[Var]) -> Var) -> f64 {
    let eval = |ins: &[Tensor]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ins.iter().map(|t| tape.leaf(t)).collect();
        let out = f(&mut tape, &vars);
        tape.scalar(out)
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t)).collect();
    let out = f(&mut tape, &vars);
    let grads = tape.backward(out).expect("scalar output");
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads.get(*v).map(<[f64]>::to_vec).unwrap_or(vec![0.0; inputs[i].numel()]);
        for (j, a) in analytic.iter().enumerate() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += h;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= h;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
            worst = worst.max(rel_err(*a, numeric));
        }
    }
    worst
}

fn param(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    // keep relu inputs away from the kink
    let data = (0..n)
        .map(|_| {
            let v: f64 = rng.random_range(0.05..1.0);
            if rng.random_bool(0.5) { v } else { -v }
        })
        .collect();
    Tensor::parameter(shape, data).unwrap()
}

/// Reduces an op's output to a scalar through fixed random weights so every entry's gradient differs.
fn weighted_sum(t: &mut Tape, x: Var, seed: u64) -> Var {
    let n: usize = t.shape(x).iter().product();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = t.constant(t.shape(x).to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let y = t.mul(x, w).unwrap();
    t.sum(y).unwrap()
}

fn gradient_suite() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    type Op = Box<dyn Fn(&mut Tape, &[Var]) -> Var>;
    let cases: Vec<(&str, Vec<Tensor>, Op)> = vec![
        ("matmul", vec![param(vec![3, 4], &mut rng), param(vec![4, 2], &mut rng)], Box::new(|t, v| {
            let y = t.matmul(v[0], v[1]).unwrap();
            weighted_sum(t, y, 1)
        })),
        ("add", vec![param(vec![3, 2], &mut rng), param(vec![3, 2], &mut rng)], Box::new(|t, v| {
            let y = t.add(v[0], v[1]).unwrap();
            weighted_sum(t, y, 2)
        })),
        ("add_scalar", vec![param(vec![3, 2], &mut rng), param(vec![1], &mut rng)], Box::new(|t, v| {
            let y = t.add(v[0], v[1]).unwrap();
            weighted_sum(t, y, 3)
        })),
        ("sub", vec![param(vec![2, 5], &mut rng), param(vec![2, 5], &mut rng)], Box::new(|t, v| {
            let y = t.sub(v[0], v[1]).unwrap();
            weighted_sum(t, y, 4)
        })),
        ("mul", vec![param(vec![2, 3], &mut rng), param(vec![2, 3], &mut rng)], Box::new(|t, v| {
            let y = t.mul(v[0], v[1]).unwrap();
            weighted_sum(t, y, 5)
        })),
        ("mul_scalar", vec![param(vec![1], &mut rng), param(vec![4, 2], &mut rng)], Box::new(|t, v| {
            let y = t.mul(v[0], v[1]).unwrap();
            weighted_sum(t, y, 6)
        })),
        ("add_bias", vec![param(vec![4, 3], &mut rng), param(vec![3], &mut rng)], Box::new(|t, v| {
            let y = t.add_bias(v[0], v[1]).unwrap();
            weighted_sum(t, y, 7)
        })),
        ("relu", vec![param(vec![3, 3], &mut rng)], Box::new(|t, v| {
            let y = t.relu(v[0]).unwrap();
            weighted_sum(t, y, 8)
        })),
        ("sigmoid", vec![param(vec![3, 3], &mut rng)], Box::new(|t, v| {
            let y = t.sigmoid(v[0]).unwrap();
            weighted_sum(t, y, 9)
        })),
        ("tanh", vec![param(vec![3, 3], &mut rng)], Box::new(|t, v| {
            let y = t.tanh(v[0]).unwrap();
            weighted_sum(t, y, 10)
        })),
        ("reshape", vec![param(vec![2, 6], &mut rng)], Box::new(|t, v| {
            let y = t.reshape(v[0], vec![4, 3]).unwrap();
            weighted_sum(t, y, 11)
        })),
        ("block_matmul", vec![param(vec![3, 3], &mut rng), param(vec![6, 2], &mut rng)], Box::new(|t, v| {
            let y = t.block_matmul(v[0], v[1]).unwrap();
            weighted_sum(t, y, 12)
        })),
        ("sum", vec![param(vec![2, 4], &mut rng)], Box::new(|t, v| t.sum(v[0]).unwrap())),
        ("mse_loss", vec![param(vec![3, 4], &mut rng)], Box::new(|t, v| {
            let target = t.constant(vec![3, 4], (0..12).map(|i| i as f64 * 0.1 - 0.5).collect()).unwrap();
            t.mse_loss(v[0], target).unwrap()
        })),
    ];
    let mut worst = ("", 0.0f64);
    for (name, inputs, f) in &cases {
        let e = grad_check(inputs, f.as_ref());
        if e > worst.1 {
            worst = (name, e);
        }
        ensure(e < 1e-4, format!("{name}: max relative error {e:.2e}"))?;
    }

    // full micro model: every parameter entry
    let map = JointMap::h36m17();
    let config = GraeConfig { gcn_hidden: 3, gcn_out: 2, lstm_hidden: 4, ..GraeConfig::default() };
    let mut model = GraeModel::new(config, &map).map_err(|e| e.to_string())?;
    for p in model.params_mut() {
        for v in p.data_mut() {
            *v += rng.random_range(-0.2..0.2);
        }
    }
    let seqs: Vec<Vec<Pose3D>> = (0..2)
        .map(|i| {
            let style = if i == 0 { Style::Inside } else { Style::Instep };
            normalize(&shot_sequence(style, Side::Right, &mut rng), &map).unwrap().frames
        })
        .collect();
    let batch: Vec<&[Pose3D]> = seqs.iter().map(Vec::as_slice).collect();
    let (_, grads) = model.loss_and_grads(&batch).map_err(|e| e.to_string())?;
    let mut central = |pi: usize, k: usize, h: f64| {
        let orig = model.params()[pi].data()[k];
        model.params_mut()[pi].data_mut()[k] = orig + h;
        let up = model.loss(&batch).unwrap();
        model.params_mut()[pi].data_mut()[k] = orig - h;
        let down = model.loss(&batch).unwrap();
        model.params_mut()[pi].data_mut()[k] = orig;
        (up - down) / (2.0 * h)
    };
    // A ReLU input within h of zero puts a kink inside the stencil. There the h and h/2
    // estimates disagree with each other; such entries are re-checked with h = 1e-6.
    let h = 1e-5;
    let shapes: Vec<usize> = grads.iter().map(Vec::len).collect();
    let mut model_worst: f64 = 0.0;
    let mut checked = 0;
    let mut kinks = 0;
    let mut worst_entry = String::new();
    for (pi, &len) in shapes.iter().enumerate() {
        for k in 0..len {
            let mut numeric = central(pi, k, h);
            let half = central(pi, k, h / 2.0);
            if rel_err(numeric, half) > 1e-4 {
                kinks += 1;
                numeric = central(pi, k, 1e-6);
            }
            let e = rel_err(grads[pi][k], numeric);
            if e > model_worst {
                model_worst = e;
                worst_entry = format!("param {pi}[{k}]: analytic {:.6e}, numeric {numeric:.6e}", grads[pi][k]);
            }
            checked += 1;
        }
    }
    ensure(model_worst < 1e-4, format!("GRAE micro-model: max relative error {model_worst:.2e} at {worst_entry}"))?;
    ensure(kinks * 20 <= checked, format!("{kinks} of {checked} entries straddle a ReLU kink"))?;
    Ok(format!(
        "{} ops (worst {} {:.1e}); GRAE micro-model {checked} parameters, max rel err {model_worst:.1e} ({kinks} kink-straddling entries checked at h=1e-6)",
        cases.len(),
        worst.0,
        worst.1
    ))
}

// ---------------------------------------------------------------- GRAE training

fn normalized(seq: &[Pose3D]) -> Vec<Pose3D> {
    normalize(seq, &JointMap::h36m17()).unwrap().frames
}

/// Reconstruction MSE computed directly from `reconstruct`.
fn recon_mse(model: &GraeModel, seq: &[Pose3D]) -> f64 {
    let out = model.reconstruct(seq).unwrap();
    let mut s = 0.0;
    for (a, b) in out.iter().zip(seq) {
        for j in 0..NUM_JOINTS {
            for c in 0..3 {
                s += (a.joints[j][c] - b.joints[j][c]).powi(2);
            }
        }
    }
    s / (SEQ_LEN * NUM_JOINTS * 3) as f64
}

fn overfit() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let seq = normalized(&shot_sequence(Style::Instep, Side::Right, &mut rng));
    let config = GraeConfig { gcn_hidden: 16, gcn_out: 8, lstm_hidden: 32, learning_rate: 1e-2, epochs: 500, seed: 3, ..GraeConfig::default() };
    let (model, history) = train(std::slice::from_ref(&seq), &config, &JointMap::h36m17()).map_err(|e| e.to_string())?;
    let mse = recon_mse(&model, &seq);
    ensure(history.steps <= 500, format!("{} steps", history.steps))?;
    ensure(mse < 1e-3, format!("reconstruction MSE {mse:.3e} after {} steps", history.steps))?;
    Ok(format!("MSE {:.3e} -> {mse:.3e} in {} steps (< 1e-3)", history.epoch_loss[0], history.steps))
}

fn convergence() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(64);
    let (raw, _) = labelled_sequences(32, Side::Right, &mut rng);
    let seqs: Vec<Vec<Pose3D>> = raw.iter().map(|s| normalized(s)).collect();
    let config = GraeConfig {
        gcn_hidden: 16,
        gcn_out: 8,
        lstm_hidden: 32,
        learning_rate: 5e-3,
        epochs: 60,
        batch_size: 16,
        seed: 1,
        ..GraeConfig::default()
    };
    let (_, history) = train(&seqs, &config, &JointMap::h36m17()).map_err(|e| e.to_string())?;
    let first = history.epoch_loss[0];
    let last = *history.epoch_loss.last().unwrap();
    let ratio = last / first;
    ensure(ratio <= 0.10, format!("final/epoch-0 MSE = {ratio:.3} ({first:.3e} -> {last:.3e})"))?;
    Ok(format!("64 sequences, {} epochs: {first:.3e} -> {last:.3e} (ratio {ratio:.3} <= 0.10)", config.epochs))
}

fn separability() -> Result<String, String> {
    let results: Vec<(u64, f64)> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..10u64)
            .map(|seed| {
                s.spawn(move || {
                    let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
                    let (raw, labels) = labelled_sequences(50, if seed % 2 == 0 { Side::Right } else { Side::Left }, &mut rng);
                    let seqs: Vec<Vec<Pose3D>> = raw.iter().map(|s| normalized(s)).collect();
                    let config = GraeConfig {
                        gcn_hidden: 8,
                        gcn_out: 4,
                        lstm_hidden: 16,
                        learning_rate: 5e-3,
                        epochs: 30,
                        batch_size: 20,
                        seed,
                        ..GraeConfig::default()
                    };
                    let (model, _) = train(&seqs, &config, &JointMap::h36m17()).unwrap();
                    let latents: Vec<Vec<f64>> = seqs.iter().map(|s| model.encode(s).unwrap()).collect();
                    let km = kmeans_fit(&latents, 2, seed, 300).unwrap();
                    (seed, label_agreement(&labels, &km.assignments, 2))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let good = results.iter().filter(|r| r.1 >= 0.95).count();
    let listing: Vec<String> = results.iter().map(|r| format!("{:.2}", r.1)).collect();
    ensure(good >= 9, format!("{good}/10 seeds reach 95% agreement [{}]", listing.join(" ")))?;
    Ok(format!("{good}/10 seeds >= 95% agreement [{}]", listing.join(" ")))
}

// ---------------------------------------------------------------- metric oracles

fn iou_oracle(a: (i32, i32, i32, i32), b: (i32, i32, i32, i32)) -> f64 {
    let inside = |r: (i32, i32, i32, i32), x: i32, y: i32| x >= r.0 && x < r.0 + r.2 && y >= r.1 && y < r.1 + r.3;
    let (mut inter, mut union) = (0, 0);
    for x in -2..24 {
        for y in -2..24 {
            let (p, q) = (inside(a, x, y), inside(b, x, y));
            inter += (p && q) as i32;
            union += (p || q) as i32;
        }
    }
    inter as f64 / union as f64
}

fn test_pose(rng: &mut ChaCha8Rng) -> Pose2D {
    let mut joints = [Keypoint2D::new(0.0, 0.0); NUM_JOINTS];
    for k in &mut joints {
        *k = Keypoint2D::new(rng.random_range(-50.0..50.0), rng.random_range(-80.0..80.0));
    }
    // h36m17 anchors: shoulders 11/14 above hips 4/1
    joints[11] = Keypoint2D::new(-20.0 + rng.random_range(-3.0..3.0), -40.0);
    joints[14] = Keypoint2D::new(20.0 + rng.random_range(-3.0..3.0), -40.0);
    joints[4] = Keypoint2D::new(-12.0, 20.0 + rng.random_range(-3.0..3.0));
    joints[1] = Keypoint2D::new(12.0, 20.0 + rng.random_range(-3.0..3.0));
    Pose2D { joints }
}

fn metric_oracles() -> Result<String, String> {
    let map = JointMap::h36m17();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    const N: usize = 200;

    // IoU by unit-cell counting on integer boxes, plus the half-overlap case
    let half = iou(&BoundingBox::new(0, 0, 0.0, 0.0, 1.0, 1.0), &BoundingBox::new(0, 0, 0.5, 0.0, 1.0, 1.0));
    ensure((half - 1.0 / 3.0).abs() < 1e-12, format!("half-overlap IoU {half}"))?;
    for _ in 0..N {
        let mut r = || (rng.random_range(0..12), rng.random_range(0..12), rng.random_range(1..9), rng.random_range(1..9));
        let (a, b) = (r(), r());
        let bb = |r: (i32, i32, i32, i32)| BoundingBox::new(0, 0, r.0 as f64, r.1 as f64, r.2 as f64, r.3 as f64);
        let got = iou(&bb(a), &bb(b));
        ensure((got - iou_oracle(a, b)).abs() < 1e-9, format!("IoU {a:?} {b:?}: {got}"))?;
    }

    // PDJ: per-joint recomputation with the torso measured from the GT anchors
    for _ in 0..N {
        let gt = test_pose(&mut rng);
        let mut pred = gt;
        for k in &mut pred.joints {
            k.x += rng.random_range(-40.0..40.0);
            k.y += rng.random_range(-40.0..40.0);
        }
        let t = rng.random_range(0.05..0.8);
        let g = &gt.joints;
        let torso = (((g[11].x + g[14].x) - (g[1].x + g[4].x)).powi(2) + ((g[11].y + g[14].y) - (g[1].y + g[4].y)).powi(2)).sqrt() / 2.0;
        let r = pdj(&pred, &gt, t, &map).map_err(|e| e.to_string())?;
        let mut hits = 0;
        for j in 0..NUM_JOINTS {
            let d = (pred.joints[j].x - g[j].x).hypot(pred.joints[j].y - g[j].y);
            let hit = d / torso < t;
            hits += hit as usize;
            ensure(r.detected[j] == Some(hit), format!("PDJ joint {j}"))?;
        }
        ensure((r.mean - hits as f64 / 17.0).abs() < 1e-9, "PDJ mean")?;
    }

    // AP: five-box staircase by hand, then random scenes against a direct re-derivation
    let gt: Vec<BoundingBox> = (0..4).map(|i| BoundingBox::new(0, 0, i as f64 * 20.0, 0.0, 10.0, 10.0)).collect();
    let sb = |b: BoundingBox, c: f64| ScoredBox { bbox: b, confidence: c };
    let pred = vec![
        sb(gt[0], 0.9),
        sb(BoundingBox::new(0, 0, 1.0, 0.0, 10.0, 10.0), 0.8),
        sb(gt[1], 0.7),
        sb(BoundingBox::new(0, 0, 41.0, 1.0, 10.0, 10.0), 0.6),
        sb(BoundingBox::new(0, 0, 200.0, 200.0, 10.0, 10.0), 0.5),
    ];
    let r = detection_pr_ap(&[DetectionFrame { gt, pred }], 0.5).map_err(|e| e.to_string())?;
    ensure((r.ap - 0.625).abs() < 1e-12 && r.precision == 0.6 && r.recall == 0.75, format!("staircase AP {}", r.ap))?;
    for _ in 0..N {
        let frames: Vec<DetectionFrame> = (0..rng.random_range(1..4))
            .map(|_| {
                let gt: Vec<BoundingBox> = (0..rng.random_range(0..4))
                    .map(|_| BoundingBox::new(0, 0, rng.random_range(0.0..60.0), rng.random_range(0.0..60.0), 10.0, 10.0))
                    .collect();
                let mut pred: Vec<ScoredBox> = Vec::new();
                for g in &gt {
                    for _ in 0..rng.random_range(0..3) {
                        let b = BoundingBox::new(0, 0, g.x + rng.random_range(-4.0..4.0), g.y + rng.random_range(-4.0..4.0), 10.0, 10.0);
                        pred.push(sb(b, rng.random_range(0.0..1.0)));
                    }
                }
                if rng.random_bool(0.5) {
                    pred.push(sb(BoundingBox::new(0, 0, rng.random_range(0.0..70.0), rng.random_range(0.0..70.0), 9.0, 9.0), rng.random_range(0.0..1.0)));
                }
                DetectionFrame { gt, pred }
            })
            .collect();
        let r = detection_pr_ap(&frames, 0.5).map_err(|e| e.to_string())?;
        let want = ap_oracle(&frames);
        ensure((r.ap - want).abs() < 1e-9, format!("AP {} vs oracle {want}", r.ap))?;
    }

    // CLIP_ACC: sort each clip by (score desc, id asc) and take the head
    for _ in 0..N {
        let clips: Vec<SelectionClip> = (0..50)
            .map(|c| {
                let n = rng.random_range(1..6);
                let shooter = rng.random_range(0..n);
                let mut ids: Vec<i64> = (0..n as i64).map(|i| 10 * i + rng.random_range(0..10)).collect();
                ids.reverse();
                SelectionClip {
                    clip_id: format!("c{c}"),
                    tracklets: (0..n)
                        .map(|t| ScoredTracklet { track_id: ids[t], score: rng.random_range(0..=3) as f64 / 3.0, is_shooter: t == shooter })
                        .collect(),
                }
            })
            .collect();
        let mut correct = 0;
        for c in &clips {
            let mut s = c.tracklets.clone();
            s.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.track_id.cmp(&b.track_id)));
            correct += s[0].is_shooter as usize;
        }
        let r = selection_metrics(&clips, 0.5).map_err(|e| e.to_string())?;
        ensure(r.clip_acc == correct as f64 / 50.0, format!("CLIP_ACC {} vs {}", r.clip_acc, correct as f64 / 50.0))?;
    }

    // knee angle by the law of cosines; ankle travel as summed frame-to-frame distances
    let dist = |a: [f64; 3], b: [f64; 3]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
    for _ in 0..N {
        let pose = Pose3D { joints: std::array::from_fn(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))) };
        for side in [Side::Left, Side::Right] {
            let l = map.limbs(side);
            let (a, b, c) = (dist(pose.joints[l.hip], pose.joints[l.knee]), dist(pose.joints[l.ankle], pose.joints[l.knee]), dist(pose.joints[l.hip], pose.joints[l.ankle]));
            let want = ((a * a + b * b - c * c) / (2.0 * a * b)).clamp(-1.0, 1.0).acos().to_degrees();
            let got = knee_angle(&pose, side, &map).map_err(|e| e.to_string())?;
            ensure((got - want).abs() < 1e-6, format!("knee angle {got} vs {want}"))?;
        }
        let frames: Vec<Pose3D> = (0..SEQ_LEN)
            .map(|_| Pose3D { joints: std::array::from_fn(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))) })
            .collect();
        let seq = NormalizedSequence::from_normalized(frames.clone());
        for side in [Side::Left, Side::Right] {
            let j = map.limbs(side).ankle;
            let mut want = 0.0;
            for f in 1..SEQ_LEN {
                want += dist(frames[f].joints[j], frames[f - 1].joints[j]);
            }
            let got = ankle_travel(&seq, side, &map);
            ensure((got - want).abs() < 1e-9, format!("ankle travel {got} vs {want}"))?;
        }
    }
    Ok(format!("IoU, PDJ, AP, CLIP_ACC, knee angle, ankle travel: {N} random instances each"))
}

/// Greedy matching by descending confidence, then area under the running-max-from-the-right precision.
fn ap_oracle(frames: &[DetectionFrame]) -> f64 {
    let mut order: Vec<(f64, usize, usize)> = Vec::new();
    for (f, fr) in frames.iter().enumerate() {
        for (i, p) in fr.pred.iter().enumerate() {
            order.push((p.confidence, f, i));
        }
    }
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let n_gt: usize = frames.iter().map(|f| f.gt.len()).sum();
    if n_gt == 0 {
        return 0.0;
    }
    let mut used: Vec<Vec<bool>> = frames.iter().map(|f| vec![false; f.gt.len()]).collect();
    let mut points = Vec::new();
    let mut tp = 0;
    for (k, (_, f, i)) in order.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (g, b) in frames[*f].gt.iter().enumerate() {
            let v = iou(&frames[*f].pred[*i].bbox, b);
            if !used[*f][g] && best.is_none_or(|(_, bv)| v > bv) {
                best = Some((g, v));
            }
        }
        if let Some((g, v)) = best {
            if v >= 0.5 {
                used[*f][g] = true;
                tp += 1;
            }
        }
        points.push((tp as f64 / n_gt as f64, tp as f64 / (k + 1) as f64));
    }
    let mut area = 0.0;
    let mut prev_r = 0.0;
    for k in 0..points.len() {
        if points[k].0 > prev_r {
            let best_p = points[k..].iter().map(|p| p.1).fold(0.0, f64::max);
            area += (points[k].0 - prev_r) * best_p;
            prev_r = points[k].0;
        }
    }
    area
}

// ---------------------------------------------------------------- HOTA

fn two_tracks() -> TrackSet {
    TrackSet::new(
        (0..4)
            .map(|f| vec![BoundingBox::new(f, 1, f as f64, 0.0, 10.0, 10.0), BoundingBox::new(f, 2, 60.0, 5.0 * f as f64, 10.0, 10.0)])
            .collect(),
    )
}

/// Every maximal one-to-one pairing of `n` rows with `m` columns.
fn matchings(n: usize, m: usize) -> Vec<Vec<(usize, usize)>> {
    fn go(r: usize, n: usize, m: usize, used: &mut [bool], cur: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
        if r == n {
            if cur.len() == n.min(m) {
                out.push(cur.clone());
            }
            return;
        }
        go(r + 1, n, m, used, cur, out);
        for c in 0..m {
            if !used[c] {
                used[c] = true;
                cur.push((r, c));
                go(r + 1, n, m, used, cur, out);
                cur.pop();
                used[c] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(0, n, m, &mut vec![false; m], &mut Vec::new(), &mut out);
    out
}

/// HOTA from its definition with brute-force per-frame matching: returns (HOTA, DetA, AssA) averaged over alpha.
fn hota_oracle(gt: &TrackSet, pred: &TrackSet) -> (f64, f64, f64) {
    let frames = gt.frames.len().max(pred.frames.len());
    let empty = Vec::new();
    let g_at = |f: usize| gt.frames.get(f).unwrap_or(&empty);
    let p_at = |f: usize| pred.frames.get(f).unwrap_or(&empty);
    let count = |s: &TrackSet, id: i64| s.frames.iter().flatten().filter(|b| b.track_id == id).count() as f64;
    let mut align: BTreeMap<(i64, i64), f64> = BTreeMap::new();
    let gids: Vec<i64> = gt.frames.iter().flatten().map(|b| b.track_id).collect();
    let pids: Vec<i64> = pred.frames.iter().flatten().map(|b| b.track_id).collect();
    for &g in &gids {
        for &p in &pids {
            if align.contains_key(&(g, p)) {
                continue;
            }
            let mut soft = 0.0;
            for f in 0..frames {
                let (gs, ps) = (g_at(f), p_at(f));
                if let (Some(a), Some(b)) = (gs.iter().find(|x| x.track_id == g), ps.iter().find(|x| x.track_id == p)) {
                    let s = iou(a, b);
                    let denom = ps.iter().map(|x| iou(a, x)).sum::<f64>() + gs.iter().map(|x| iou(x, b)).sum::<f64>() - s;
                    if denom > 1e-10 {
                        soft += s / denom;
                    }
                }
            }
            align.insert((g, p), soft / (count(gt, g) + count(pred, p) - soft));
        }
    }
    let mut matched: Vec<(i64, i64, f64)> = Vec::new();
    for f in 0..frames {
        let (gs, ps) = (g_at(f), p_at(f));
        let mut best: Option<(f64, Vec<(usize, usize)>)> = None;
        for m in matchings(gs.len(), ps.len()) {
            let s: f64 = m.iter().map(|&(i, j)| align[&(gs[i].track_id, ps[j].track_id)] * iou(&gs[i], &ps[j])).sum();
            if best.as_ref().is_none_or(|b| s > b.0) {
                best = Some((s, m));
            }
        }
        if let Some((_, m)) = best {
            matched.extend(m.iter().map(|&(i, j)| (gs[i].track_id, ps[j].track_id, iou(&gs[i], &ps[j]))));
        }
    }
    let (n_gt, n_pred) = (gt.detections() as f64, pred.detections() as f64);
    let (mut h, mut d, mut a) = (0.0, 0.0, 0.0);
    for k in 1..=19 {
        let alpha = k as f64 * 0.05;
        let tps: Vec<(i64, i64)> = matched.iter().filter(|m| m.2 >= alpha - 1e-10).map(|m| (m.0, m.1)).collect();
        let tp = tps.len() as f64;
        let det = if n_gt + n_pred - tp > 0.0 { tp / (n_gt + n_pred - tp) } else { 0.0 };
        let mut acc = 0.0;
        for &(g, p) in &tps {
            let tpa = tps.iter().filter(|&&x| x == (g, p)).count() as f64;
            acc += tpa / (count(gt, g) + count(pred, p) - tpa);
        }
        let ass = if tp > 0.0 { acc / tp } else { 0.0 };
        d += det / 19.0;
        a += ass / 19.0;
        h += (det * ass).sqrt() / 19.0;
    }
    (h, d, a)
}

fn random_tracks(rng: &mut ChaCha8Rng) -> (TrackSet, TrackSet) {
    let frames = rng.random_range(1..=5);
    let n_gt = rng.random_range(1..=3);
    let n_pred = rng.random_range(1..=3);
    let starts: Vec<(f64, f64)> = (0..n_gt).map(|_| (rng.random_range(0.0..30.0), rng.random_range(0.0..30.0))).collect();
    let mut gt = vec![Vec::new(); frames];
    let mut pred = vec![Vec::new(); frames];
    for f in 0..frames {
        for (t, s) in starts.iter().enumerate() {
            if rng.random_bool(0.8) {
                gt[f].push(BoundingBox::new(f, t as i64, s.0 + 2.0 * f as f64, s.1, 10.0, 10.0));
            }
        }
        let mut ids: Vec<i64> = (0..n_pred as i64).map(|i| 50 + i).collect();
        for i in (1..ids.len()).rev() {
            ids.swap(i, rng.random_range(0..=i));
        }
        let mut used = 0;
        for g in gt[f].clone() {
            if used < ids.len() && rng.random_bool(0.85) {
                pred[f].push(BoundingBox::new(f, ids[used], g.x + rng.random_range(-5.0..5.0), g.y + rng.random_range(-5.0..5.0), rng.random_range(7.0..13.0), rng.random_range(7.0..13.0)));
                used += 1;
            }
        }
        if used < ids.len() && rng.random_bool(0.3) {
            pred[f].push(BoundingBox::new(f, ids[used], rng.random_range(0.0..40.0), rng.random_range(0.0..40.0), 10.0, 10.0));
        }
    }
    (TrackSet::new(gt), TrackSet::new(pred))
}

fn hota_criterion() -> Result<String, String> {
    let gt = two_tracks();
    let r = hota(&gt, &gt).map_err(|e| e.to_string())?;
    ensure(r.hota == 1.0 && r.det_a == 1.0 && r.ass_a == 1.0, format!("identity gives {}/{}/{}", r.hota, r.det_a, r.ass_a))?;

    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let instances = 200;
    for i in 0..instances {
        let (g, p) = random_tracks(&mut rng);
        let r = hota(&g, &p).map_err(|e| e.to_string())?;
        let (h, d, a) = hota_oracle(&g, &p);
        ensure((r.hota - h).abs() < 1e-12 && (r.det_a - d).abs() < 1e-12 && (r.ass_a - a).abs() < 1e-12, format!("instance {i} differs from the exhaustive oracle"))?;
    }

    // identities 1 and 2 exchange tracks after frame 1
    let mut swapped = gt.clone();
    for f in 2..4 {
        for b in &mut swapped.frames[f] {
            b.track_id = 3 - b.track_id;
        }
    }
    let s = hota(&gt, &swapped).map_err(|e| e.to_string())?;
    let (oh, _, oa) = hota_oracle(&gt, &swapped);
    let mut fresh = gt.clone();
    for f in 2..4 {
        for b in &mut fresh.frames[f] {
            b.track_id += 10;
        }
    }
    let fr = hota(&gt, &fresh).map_err(|e| e.to_string())?;
    let base = format!("identity 1/1/1; {instances} random instances match the exhaustive oracle");
    let target_met = (s.det_a - 1.0).abs() < 1e-9 && (s.ass_a - 0.5).abs() < 1e-9 && (s.hota - 0.5f64.sqrt()).abs() < 1e-9;
    if target_met {
        return Ok(format!("{base}; half-swap DetA 1, AssA 0.5, HOTA {:.4}", s.hota));
    }
    Err(format!(
        "{base}; half-swap gives DetA {:.4}, AssA {:.4}, HOTA {:.4} (expected 1, 0.5, 0.7071). \
         With a true swap each (gt, pred) pairing has TPA=2, FNA=2, FPA=2, so AssA = 2/6 = 1/3 \
         (brute-force oracle agrees: AssA {oa:.4}, HOTA {oh:.4}). AssA = 0.5 needs FPA = 0, which happens \
         when the second half uses previously unseen ids: that variant gives DetA {:.4}, AssA {:.4}, HOTA {:.4}",
        s.det_a, s.ass_a, s.hota, fr.det_a, fr.ass_a, fr.hota
    ))
}

// ---------------------------------------------------------------- clustering / PCA / t-SNE

fn analysis_properties() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    // Lloyd: recompute inertia from every recorded iteration's history
    for run in 0..100u64 {
        let n = rng.random_range(10..60);
        let dim = rng.random_range(1..6);
        let data: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect()).collect();
        let k = rng.random_range(1..=6.min(n));
        let m = kmeans_fit(&data, k, run, 300).map_err(|e| e.to_string())?;
        ensure(m.inertia_history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)), format!("run {run}: inertia increased"))?;
        let direct: f64 = data
            .iter()
            .zip(&m.assignments)
            .map(|(x, &c)| x.iter().zip(&m.centroids[c]).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
            .sum();
        ensure((direct - m.inertia).abs() <= 1e-9 * direct.max(1.0), format!("run {run}: inertia {} vs {direct}", m.inertia))?;
    }

    // PCA: orthonormal rows and reconstruction error = (N - 1) * discarded variance
    let mut worst_orth: f64 = 0.0;
    let mut worst_ident: f64 = 0.0;
    for (n, dim, d) in [(40, 6, 3), (30, 12, 5), (8, 20, 4), (50, 3, 1), (12, 60, 6)] {
        let data: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|i| rng.random_range(-1.0..1.0) * (1.0 + i as f64)).collect()).collect();
        let m = pca_fit(&data, d).map_err(|e| e.to_string())?;
        for a in 0..d {
            for b in 0..d {
                let dot: f64 = m.components[a].iter().zip(&m.components[b]).map(|(x, y)| x * y).sum();
                worst_orth = worst_orth.max((dot - if a == b { 1.0 } else { 0.0 }).abs());
            }
        }
        let mean: Vec<f64> = (0..dim).map(|c| data.iter().map(|r| r[c]).sum::<f64>() / n as f64).collect();
        let total: f64 = (0..dim).map(|c| data.iter().map(|r| (r[c] - mean[c]).powi(2)).sum::<f64>()).sum::<f64>() / (n as f64 - 1.0);
        let kept: f64 = m.explained_variance.iter().sum();
        let recon: f64 = data
            .iter()
            .map(|x| {
                let back = m.inverse_transform_one(&m.transform_one(x));
                x.iter().zip(&back).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            })
            .sum();
        worst_ident = worst_ident.max((recon - (n as f64 - 1.0) * (total - kept)).abs());
    }
    ensure(worst_orth < 1e-8, format!("PCA orthonormality error {worst_orth:.2e}"))?;
    ensure(worst_ident < 1e-8, format!("PCA discarded-variance identity error {worst_ident:.2e}"))?;

    // t-SNE: perplexity from the returned bandwidths, and KL decrease
    let mut worst_perp: f64 = 0.0;
    for ds in 0..10u64 {
        let n = rng.random_range(30..50);
        let dim = rng.random_range(2..8);
        let data: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let config = TsneConfig { perplexity: 8.0, seed: ds, ..TsneConfig::default() };
        let e = tsne_embed(&data, &config).map_err(|e| e.to_string())?;
        for i in 0..n {
            let d: Vec<f64> = (0..n).map(|j| data[i].iter().zip(&data[j]).map(|(a, b)| (a - b).powi(2)).sum()).collect();
            let w: Vec<f64> = (0..n).map(|j| if j == i { 0.0 } else { (-e.betas[i] * d[j]).exp() }).collect();
            let z: f64 = w.iter().sum();
            let h: f64 = -w.iter().filter(|x| **x > 0.0).map(|x| (x / z) * (x / z).ln()).sum::<f64>();
            worst_perp = worst_perp.max((h.exp() - 8.0).abs());
        }
        let initial = e.kl_history[0].1;
        ensure(e.final_kl < initial, format!("dataset {ds}: KL {initial} -> {}", e.final_kl))?;
    }
    ensure(worst_perp < 1e-5, format!("t-SNE perplexity error {worst_perp:.2e}"))?;
    Ok(format!(
        "100 Lloyd runs monotone; PCA orth {worst_orth:.1e}, identity {worst_ident:.1e}; t-SNE perplexity err {worst_perp:.1e}, KL down on 10 datasets"
    ))
}

// ---------------------------------------------------------------- pipeline

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn bundled_config(out: &Path) -> RunConfig {
    let mut c = RunConfig::load(&repo_root().join("configs/synthetic.json")).expect("bundled config");
    c.out = out.to_path_buf();
    c
}

fn csv_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for sub in [dir.to_path_buf(), dir.join("report")] {
        for e in std::fs::read_dir(&sub).unwrap().flatten() {
            let p = e.path();
            if p.extension().is_some_and(|x| x == "csv") {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Result<String, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    cmd_run(&bundled_config(&a)).map_err(|e| e.to_string())?;
    cmd_run(&bundled_config(&b)).map_err(|e| e.to_string())?;
    let (fa, fb) = (csv_files(&a), csv_files(&b));
    ensure(!fa.is_empty(), "no CSV artifacts")?;
    ensure(fa.keys().eq(fb.keys()), "different artifact sets")?;
    let differing: Vec<&String> = fa.keys().filter(|k| fa[*k] != fb[*k]).collect();
    ensure(differing.is_empty(), format!("differ: {differing:?}"))?;
    let header_ok = fa.values().all(|bytes| {
        let first = String::from_utf8_lossy(bytes).lines().next().unwrap_or_default().to_string();
        first.starts_with("# format=1 config_hash=") && first.contains(" seed=7")
    });
    ensure(header_ok, "a CSV lacks the config-hash/seed header")?;
    Ok(format!("{} CSV artifacts byte-identical across two runs", fa.len()))
}

fn smoke() -> Result<String, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = tmp.path().join("run");
    let config = repo_root().join("configs/synthetic.json");
    let bin = env!("CARGO_BIN_EXE_shotpose");
    let mut steps = Vec::new();
    for step in [&["validate"][..], &["train"], &["embed"], &["cluster", "--k", "3"], &["stats"], &["tsne"], &["report"]] {
        let status = Command::new(bin)
            .args(["--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()])
            .args(step)
            .env("SHOTPOSE_LOG", "warn")
            .output()
            .map_err(|e| e.to_string())?;
        ensure(status.status.success(), format!("`{}` exited with {}: {}", step.join(" "), status.status, String::from_utf8_lossy(&status.stderr)))?;
        steps.push(step[0]);
    }
    let report = out.join("report");
    let names: Vec<String> = std::fs::read_dir(&report).map_err(|e| e.to_string())?.flatten().map(|e| e.file_name().to_string_lossy().into_owned()).collect();
    let count = |ext: &str| names.iter().filter(|n| n.ends_with(ext)).count();
    ensure(count(".csv") == 4 && count(".svg") == 1 && names.iter().any(|n| n == "manifest.json"), format!("report contains {names:?}"))?;
    Ok(format!("{} -> report with 4 CSV, 1 SVG, manifest", steps.join(" -> ")))
}

/// Runs the pipeline on user-supplied data and prints the cluster comparison next to the
/// published reference (ankle travel +16%, max vertical +33%, knee angle -17%).
fn real_data() -> Option<String> {
    let root = std::env::var_os("SHOTPOSE_REAL_DATA")?;
    let tmp = tempfile::tempdir().ok()?;
    let mut config = RunConfig { dataset: PathBuf::from(root), out: tmp.path().to_path_buf(), ..RunConfig::default() };
    config.perplexity = config.perplexity.min(5.0);
    Some(match cmd_run(&config) {
        Ok(_) => {
            let stats = std::fs::read_to_string(tmp.path().join("cluster_stats.csv")).unwrap_or_default();
            let pairs: Vec<&str> = stats.lines().filter(|l| l.starts_with("pct_diff")).collect();
            format!("pairwise % (a,b,-,ankle,vertical,knee): {} | reference: +16% / +33% / -17%", pairs.join(" ; "))
        }
        Err(e) => format!("pipeline error: {e}"),
    })
}

fn main() {
    println!("acceptance criteria");
    let outcomes = vec![
        check("gradients", Some(Duration::from_secs(30)), gradient_suite),
        check("overfit", Some(Duration::from_secs(60)), overfit),
        check("convergence", Some(Duration::from_secs(120)), convergence),
        check("separability", Some(Duration::from_secs(300)), separability),
        check("metric-oracles", None, metric_oracles),
        check("hota", None, hota_criterion),
        check("analysis", None, analysis_properties),
        check("determinism", None, determinism),
        check("smoke", Some(Duration::from_secs(300)), smoke),
    ];
    match real_data() {
        Some(d) => println!("INFO real-data       (non-gating) {d}"),
        None => println!("SKIP real-data       (non-gating) set SHOTPOSE_REAL_DATA to a converted dataset root"),
    }
    let failed: Vec<&Outcome> = outcomes.iter().filter(|o| !o.pass).collect();
    println!("{} passed, {} failed", outcomes.len() - failed.len(), failed.len());
    let unexpected: Vec<&str> = failed.iter().filter(|o| !KNOWN_RED.contains(&o.id)).map(|o| o.id).collect();
    for o in failed.iter().filter(|o| KNOWN_RED.contains(&o.id)) {
        println!("known red: {}: {}", o.id, o.detail);
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
