//! Acceptance criteria. Runs without the test harness so every criterion
//! prints its PASS/FAIL line; exits nonzero if any criterion failed.

mod common;

use std::time::{Duration, Instant};

use common::{
    brute_force_min_cut, dice, disk_case, flood_fill_labels, oracle_counts, random_lesion_phantom, random_mask,
};
use osteoforge::cli::{weak_label_volume, PipelineConfig};
use osteoforge::detect::{baseline_predict, extract_lesion_components, format_percent, DetectionCounts};
use osteoforge::graphcut::{grabcut_segment_traced, max_flow, FlowNetwork, GrabCutParams, TrimapLabel};
use osteoforge::nifti;
use osteoforge::recist::rasterize_quad;
use osteoforge::{
    connected_components, evaluate_masks, generate_phantom, perturb_predictions, seed_geometry, Connectivity3D,
    Geometry, Grid, PerturbMode, PhantomSpec, WindowSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn check(id: u32, name: &str, budget: Duration, f: impl FnOnce() -> Verdict) -> bool {
    let start = Instant::now();
    let v = f();
    let took = start.elapsed();
    let in_time = took <= budget;
    let pass = v.pass && in_time;
    println!(
        "criterion {id} {}: {name}: {} [{:.2}s, budget {}s{}]",
        if pass { "PASS" } else { "FAIL" },
        v.detail,
        took.as_secs_f64(),
        budget.as_secs(),
        if in_time { "" } else { ", over budget" }
    );
    pass
}

fn metric_arithmetic() -> Verdict {
    // Reference values: 96.7 / 47.3 and 25.6 / 50.2.
    let rows = [((375, 13, 418), 96.7, 47.3), ((99, 289, 98), 25.6, 50.2)];
    let mut ok = true;
    let mut detail = Vec::new();
    for ((tp, fp, fn_), p_printed, r_printed) in rows {
        let c = DetectionCounts::new(tp, fp, fn_);
        let p: f64 = format_percent(c.precision()).parse().unwrap();
        let r: f64 = format_percent(c.recall()).parse().unwrap();
        ok &= (p - p_printed).abs() <= 0.15 + 1e-9 && (r - r_printed).abs() <= 0.15 + 1e-9;
        detail.push(format!("({tp},{fp},{fn_}) -> P {p:.1} R {r:.1}"));
    }
    Verdict {
        pass: ok,
        detail: detail.join("; "),
    }
}

fn max_flow_exactness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let trials = 1000;
    let mut exact = 0;
    for _ in 0..trials {
        let n = rng.random_range(2..=10usize);
        let (s, t) = (0, n - 1);
        let mut net = FlowNetwork::new(n, s, t).unwrap();
        let mut arcs = Vec::new();
        for _ in 0..rng.random_range(0..=3 * n) {
            let (u, v) = (rng.random_range(0..n), rng.random_range(0..n));
            if u != v {
                let c = rng.random_range(0..=10u32) as f64;
                net.add_arc(u, v, c);
                arcs.push((u, v, c));
            }
        }
        if max_flow(&net).flow == brute_force_min_cut(n, &arcs, s, t) {
            exact += 1;
        }
    }
    Verdict {
        pass: exact == trials,
        detail: format!("{exact}/{trials} networks match subset enumeration"),
    }
}

struct GrabCutRuns {
    dice_ok: usize,
    constraints_ok: usize,
    monotone_violations: usize,
    min_dice: f64,
}

fn grabcut_runs() -> GrabCutRuns {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let params = GrabCutParams::default();
    let mut r = GrabCutRuns {
        dice_ok: 0,
        constraints_ok: 0,
        monotone_violations: 0,
        min_dice: 1.0,
    };
    for i in 0..50 {
        let case = disk_case(&mut rng);
        let out = grabcut_segment_traced(&case.slice, &case.seed, &params, i).unwrap();
        let d = dice(&out.mask, &case.truth);
        r.min_dice = r.min_dice.min(d);
        if d >= 0.95 {
            r.dice_ok += 1;
        }
        let quad = rasterize_quad(&case.seed, (case.slice.width, case.slice.height));
        let superset = quad.data.iter().zip(&out.mask.data).all(|(q, m)| !q || *m);
        let boxed = out
            .mask
            .data
            .iter()
            .enumerate()
            .all(|(j, &m)| !m || case.seed.bbox.contains(j % out.mask.width, j / out.mask.width));
        let no_definite_bg = out
            .mask
            .data
            .iter()
            .zip(&out.trimap.data)
            .all(|(m, t)| !m || *t != TrimapLabel::DefiniteBg);
        if superset && boxed && no_definite_bg {
            r.constraints_ok += 1;
        }
        r.monotone_violations += out.energy_sequence().windows(2).filter(|w| w[1] > w[0]).count();
    }
    r
}

fn weak_mask_structure() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = PipelineConfig::default();
    let (mut total, mut ok, mut edge) = (0, 0, 0);
    while total < 100 {
        let p = generate_phantom(&random_lesion_phantom(&mut rng, 5)).unwrap();
        let [nx, ny, nz] = p.volume.dims();
        let (_, masks, _) = weak_label_volume(&p.volume, &p.recist, &p.body, &p.skeleton, &cfg).unwrap();
        for (m, r) in masks.iter().zip(&p.recist) {
            total += 1;
            let g = seed_geometry(r, (nx, ny)).unwrap();
            let at_edge = r.slice_index == 0 || r.slice_index == nz - 1;
            edge += at_edge as usize;
            let extent_ok = m.z_extent.len() == if at_edge { 2 } else { 3 };
            let footprints_ok = m.z_extent.iter().all(|&z| {
                let f = m.footprint(z).unwrap();
                if z == r.slice_index {
                    f.data.iter().enumerate().all(|(i, &on)| !on || g.bbox.contains(i % nx, i / nx))
                } else {
                    f == g.bbox.to_mask(nx, ny)
                }
            });
            if extent_ok && footprints_ok && m.bbox == g.bbox {
                ok += 1;
            }
        }
    }
    Verdict {
        pass: ok == total,
        detail: format!("{ok}/{total} lesions structurally exact ({edge} at volume edges)"),
    }
}

fn components_vs_flood_fill() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut ok = 0;
    for i in 0..100 {
        let density = 0.1 + 0.5 * (i as f64 / 100.0);
        let mask = random_mask(&mut rng, [32, 32, 32], density);
        let agree = [Connectivity3D::Six, Connectivity3D::TwentySix].iter().all(|&c| {
            let (oracle, _) = flood_fill_labels(&mask, c);
            connected_components(&mask, c).labels.data() == &oracle[..]
        });
        ok += agree as usize;
    }
    Verdict {
        pass: ok == 100,
        detail: format!("{ok}/100 random 32^3 masks identical for 6 and 26 connectivity"),
    }
}

fn matching_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut ok = 0;
    for _ in 0..200 {
        let n = rng.random_range(2..=16usize);
        let (dg, dp) = (rng.random_range(0.02..0.3), rng.random_range(0.02..0.3));
        let gt = random_mask(&mut rng, [n, n, n], dg);
        let pred = random_mask(&mut rng, [n, n, n], dp);
        let r = evaluate_masks(&gt, &pred, Connectivity3D::TwentySix, 0.0).unwrap();
        ok += ((r.tp, r.fp, r.fn_) == oracle_counts(&gt, &pred, Connectivity3D::TwentySix)) as usize;
    }

    let phantom = generate_phantom(&PhantomSpec::default()).unwrap();
    let masks = phantom.lesion_masks();
    let gt = phantom.all_lesions();
    let n = masks.len();
    let mut deltas_ok = 0;
    let mut deltas = 0;
    for k in 1..=4 {
        for seed in 0..3 {
            for (mode, want) in [
                (PerturbMode::Drop(k), (n - k, 0, k)),
                (PerturbMode::AddSpurious(k), (n, k, 0)),
            ] {
                let pred = perturb_predictions(&masks, mode, seed).unwrap();
                let r = evaluate_masks(&gt, &pred, Connectivity3D::TwentySix, 0.0).unwrap();
                deltas += 1;
                deltas_ok += ((r.tp, r.fp, r.fn_) == want) as usize;
            }
        }
    }
    Verdict {
        pass: ok == 200 && deltas_ok == deltas,
        detail: format!("{ok}/200 volume pairs match the all-pairs oracle; {deltas_ok}/{deltas} perturbation deltas exact"),
    }
}

fn end_to_end() -> Verdict {
    let p = generate_phantom(&PhantomSpec::default()).unwrap();
    let cfg = PipelineConfig {
        workers: 4,
        ..Default::default()
    };
    let (labels, _, _) = weak_label_volume(&p.volume, &p.recist, &p.body, &p.skeleton, &cfg).unwrap();
    let gt = extract_lesion_components(&labels);
    let perfect = perturb_predictions(&p.lesion_masks(), PerturbMode::Perfect, 0).unwrap();
    let r = evaluate_masks(&gt, &perfect, Connectivity3D::TwentySix, 0.0).unwrap();
    let perfect_ok = (r.tp, r.fp, r.fn_) == (10, 0, 0)
        && format_percent(r.precision) == "100.0"
        && format_percent(r.recall) == "100.0";

    let base = baseline_predict(&p.volume, &p.skeleton).unwrap();
    let b = evaluate_masks(&gt, &base, Connectivity3D::TwentySix, 0.0).unwrap();
    let oracle = oracle_counts(&gt, &base, Connectivity3D::TwentySix);
    Verdict {
        pass: perfect_ok && (b.tp, b.fp, b.fn_) == oracle,
        detail: format!(
            "perfect TP={} FP={} FN={} P {} R {}; baseline ({}, {}, {}) vs oracle {oracle:?}",
            r.tp,
            r.fp,
            r.fn_,
            format_percent(r.precision),
            format_percent(r.recall),
            b.tp,
            b.fp,
            b.fn_
        ),
    }
}

fn io_fidelity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let dir = tempfile::tempdir().unwrap();
    let mut ok = 0;
    for i in 0..50 {
        let dims = [rng.random_range(1..=24), rng.random_range(1..=24), rng.random_range(1..=12)];
        let spacing = [(); 3].map(|_| rng.random_range(1..=32u32) as f64 / 16.0);
        let origin = [(); 3].map(|_| rng.random_range(-800..=800i32) as f64 / 4.0);
        let g = Geometry::new(dims, spacing, origin).unwrap();
        let data = (0..g.len()).map(|_| rng.random::<i16>()).collect();
        let v = Grid::from_vec(g, data).unwrap();
        let path = dir.path().join(if i % 2 == 0 { format!("v{i}.nii.gz") } else { format!("v{i}.nii") });
        nifti::write_volume(&v, &path).unwrap();
        let back = nifti::read_volume(&path).unwrap();
        ok += (back == v) as usize;
    }
    let w = WindowSpec::default();
    let ends = (w.apply(-175.0), w.apply(275.0), w.apply(50.0));
    Verdict {
        pass: ok == 50 && ends == (0, 255, 128),
        detail: format!("{ok}/50 volumes bit-exact (half gzip); window -175/275/50 -> {}/{}/{}", ends.0, ends.1, ends.2),
    }
}

fn main() {
    let secs = Duration::from_secs;
    let mut results = Vec::new();
    results.push(check(1, "metric arithmetic on published counts", secs(1), metric_arithmetic));
    results.push(check(2, "max-flow vs brute-force min cut", secs(10), max_flow_exactness));

    let mut violations = None;
    results.push(check(3, "GrabCut disk recovery", secs(60), || {
        let runs = grabcut_runs();
        violations = Some(runs.monotone_violations);
        Verdict {
            pass: runs.dice_ok >= 48 && runs.constraints_ok == 50,
            detail: format!(
                "Dice >= 0.95 in {}/50 (min {:.3}); hard constraints {}/50",
                runs.dice_ok, runs.min_dice, runs.constraints_ok
            ),
        }
    }));
    let violations = violations.expect("criterion 3 ran");
    results.push(check(4, "GrabCut energy monotonicity", secs(1), || Verdict {
        pass: violations == 0,
        detail: format!("{violations} violations across the 50 runs of criterion 3"),
    }));

    results.push(check(5, "weak-mask structure", secs(120), weak_mask_structure));
    results.push(check(6, "connected components vs flood fill", secs(30), components_vs_flood_fill));
    results.push(check(7, "detection matching oracle", secs(60), matching_oracle));
    results.push(check(8, "end-to-end phantom closure", secs(120), end_to_end));
    results.push(check(9, "NIfTI and windowing fidelity", secs(30), io_fidelity));

    let failed = results.iter().filter(|&&p| !p).count();
    println!("acceptance: {}/{} criteria pass", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
