//! End-to-end acceptance criteria. Runs as a plain binary and prints one
//! PASS/FAIL line per criterion.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relucone::circulant_cone::{check_contraction_with, check_nesting_with, ContractionOptions, NestingOptions};
use relucone::{
    build_dual_basis, check_shift_equivariance, circulant_layer, cone_of, preimage, preimage_contains, run_scenario,
    sample_preimage, bundled_names, Kernel, LayerMap, ScenarioConfig, Tolerances, Vector,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_layer(rng: &mut ChaCha8Rng, d: usize) -> LayerMap {
    loop {
        let w = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let svd = w.clone().svd(false, false);
        let s = &svd.singular_values;
        if s.min() > 1e-2 * s.max() {
            let b = Vector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
            return LayerMap::new(w, b).unwrap();
        }
    }
}

fn soundness() -> Outcome {
    let tol = Tolerances::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut points = 0usize;
    for n in 0..50 {
        let d = 2 + n % 5;
        let layer = random_layer(&mut rng, d);
        for k in 0..20 {
            let x = Vector::from_fn(d, |_, _| rng.random_range(0.0..2.0));
            let y = layer.forward(&x).unwrap();
            let p = preimage(&layer, &y, &tol).map_err(|e| format!("layer {n}: {e}"))?;
            // coefficients of the generating input bound the window from below
            let reach = p.zero_idx().iter().map(|&i| p.coordinates(&x)[i]).fold(0.0, f64::max);
            let xs = sample_preimage(&p, 1000, (n * 20 + k) as u64, (1.5 * reach).max(4.0)).map_err(|e| format!("layer {n}: {e}"))?;
            for s in &xs {
                worst = worst.max((layer.forward(s).unwrap() - &y).amax());
            }
            points += xs.len();
        }
    }
    let elapsed = start.elapsed();
    ensure(worst <= 1e-8, || format!("residual {worst:.3e} > 1e-8"))?;
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!("{points} points, max residual {worst:.2e}, {:.2} s", elapsed.as_secs_f64()))
}

/// Weights and biases on a 0.05 lattice, so forward values on the 0.01 grid
/// are either equal or at least 5e-4 apart.
fn lattice_layer(rng: &mut ChaCha8Rng, d: usize) -> LayerMap {
    loop {
        let w = DMatrix::from_fn(d, d, |i, j| {
            let q = if i == j { rng.random_range(10..=24) } else { rng.random_range(-6..=6) };
            q as f64 * 0.05
        });
        if w.determinant().abs() > 0.1 {
            let b = Vector::from_fn(d, |_, _| rng.random_range(-12..=4) as f64 * 0.05);
            return LayerMap::new(w, b).unwrap();
        }
    }
}

fn completeness() -> Outcome {
    let tol = Tolerances::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut total_hits = 0usize;
    for d in [2usize, 3] {
        let steps = 201usize;
        let count = steps.pow(d as u32);
        let grid = |mut n: usize| {
            Vector::from_fn(d, |_, _| {
                let i = n % steps;
                n /= steps;
                i as f64 * 0.01
            })
        };
        for t in 0..10 {
            let layer = lattice_layer(&mut rng, d);
            // every other output has a zero entry, so its preimage is a cone
            let y = loop {
                let y = layer.forward(&grid(rng.random_range(0..count))).unwrap();
                if t % 2 == 0 || y.iter().any(|v| *v == 0.0) {
                    break y;
                }
            };
            let p = preimage(&layer, &y, &tol).map_err(|e| format!("d={d} output {t}: {e}"))?;
            let mut hits = 0;
            for n in 0..count {
                let x = grid(n);
                let oracle = (layer.forward(&x).unwrap() - &y).amax() <= 1e-6;
                let claimed = preimage_contains(&p, &x, 1e-6);
                if oracle != claimed {
                    return Err(format!("d={d} output {t}: grid point {:?} oracle {oracle} membership {claimed}", x.as_slice()));
                }
                hits += oracle as usize;
            }
            total_hits += hits;
        }
    }
    Ok(format!("20 outputs, set equality on the 0.01 grid ({total_hits} preimage grid points)"))
}

fn duality() -> Outcome {
    let tol = Tolerances::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut off = 0.0f64;
    let mut diag = f64::NEG_INFINITY;
    for n in 0..100 {
        let d = 2 + n % 5;
        let layer = random_layer(&mut rng, d);
        let basis = build_dual_basis(&layer, &tol).map_err(|e| e.to_string())?;
        for i in 0..d {
            for j in 0..d {
                let v = layer.row(j).dot(basis.vector(i));
                if i == j {
                    diag = diag.max(v);
                } else {
                    off = off.max(v.abs());
                }
            }
        }
    }
    ensure(off < 1e-9, || format!("max |w_j.e_i| = {off:.3e}"))?;
    ensure(diag < 0.0, || format!("max w_i.e_i = {diag:.3e}"))?;
    Ok(format!("100 layers, max off-diagonal {off:.2e}, max diagonal {diag:.3}"))
}

fn circulant() -> Outcome {
    let tol = Tolerances::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut apex_err = 0.0f64;
    let mut fwd_err = 0.0f64;
    let mut shift_err = 0.0f64;
    let mut apex_in_orthant = 0;
    for n in 0..100 {
        let d = 2 + n % 6;
        let support = rng.random_range(1..=d);
        let taps: Vec<f64> = (0..support).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a: f64 = taps.iter().sum();
        if a.abs() < 0.05 {
            continue;
        }
        let b = rng.random_range(-1.0..1.0);
        let layer = circulant_layer(&Kernel::new(taps, b).unwrap(), d).unwrap();
        let cone = cone_of(&layer, &tol).map_err(|e| e.to_string())?;
        apex_err = apex_err.max(cone.apex.iter().map(|v| (v + b / a).abs()).fold(0.0, f64::max));
        if cone.apex.iter().all(|v| *v >= 0.0) {
            apex_in_orthant += 1;
            fwd_err = fwd_err.max(layer.forward(&cone.apex).unwrap().amax());
        }
        shift_err = shift_err.max(check_shift_equivariance(&layer, 100, n as u64));
    }
    ensure(apex_err < 1e-9, || format!("apex error {apex_err:.3e}"))?;
    ensure(fwd_err < 1e-9, || format!("forward(apex) = {fwd_err:.3e}"))?;
    ensure(shift_err < 1e-12, || format!("shift error {shift_err:.3e}"))?;
    Ok(format!("apex error {apex_err:.1e}, forward(apex) {fwd_err:.1e} over {apex_in_orthant} apexes, shift error {shift_err:.1e}"))
}

fn cell_bound() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for n in 0..20 {
        let d = 2 + n % 3;
        let layer = random_layer(&mut rng, d);
        let cells = layer.enumerate_cells(2.0, 0.1).map_err(|e| e.to_string())?;
        ensure(cells.len() <= 1 << d, || format!("d={d}: {} cells", cells.len()))?;
    }
    let out = run_scenario(&ScenarioConfig::bundled("fig3-identity").unwrap()).map_err(|e| e.to_string())?;
    let count = out.export.summary["cell_count"][0].as_u64().unwrap_or(0);
    ensure(count == 8, || format!("identity kernel gave {count} cells"))?;
    Ok("20 random layers within 2^d, identity kernel has 8 cells".into())
}

fn nesting_contraction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut summary = Vec::new();
    for d in [3usize, 4, 5] {
        let mut certified = 0;
        let mut tried = 0;
        while certified < 50 {
            tried += 1;
            ensure(tried <= 2000, || format!("d={d}: only {certified} nested layers in 2000 draws"))?;
            let support = rng.random_range(2..=3);
            let mut taps = vec![rng.random_range(0.8..1.2)];
            taps.extend((1..support).map(|_| rng.random_range(0.0..0.1)));
            let layer = circulant_layer(&Kernel::new(taps, rng.random_range(-0.8..-0.4)).unwrap(), d).unwrap();
            let seed = tried as u64;
            let opts = NestingOptions { samples_per_subset: 16, seed, ..NestingOptions::default() };
            if !check_nesting_with(&layer, &opts).map_err(|e| e.to_string())?.fully_nested {
                continue;
            }
            certified += 1;
            let c = check_contraction_with(&layer, &ContractionOptions { seed, ..ContractionOptions::default() })
                .map_err(|e| e.to_string())?;
            ensure(c.is_contracting(), || format!("d={d}: nested layer raises dimension: {:?}", c.violations[0].pattern))?;
        }
        summary.push(format!("d={d} {certified}/{tried}"));
    }
    let wide = circulant_layer(&Kernel::new(vec![0.34, 0.33, 0.33], -0.1).unwrap(), 3).unwrap();
    let n = check_nesting_with(&wide, &NestingOptions::default()).map_err(|e| e.to_string())?;
    let c = check_contraction_with(&wide, &ContractionOptions::default()).map_err(|e| e.to_string())?;
    ensure(!n.fully_nested, || "wide layer reported nested".into())?;
    ensure(!c.violations.is_empty(), || "wide layer reported contracting".into())?;
    Ok(format!("nested layers contract ({}), wide layer has {} violation(s)", summary.join(", "), c.violations.len()))
}

fn fig4() -> Outcome {
    let start = Instant::now();
    let out = run_scenario(&ScenarioConfig::bundled("fig4-triangle").unwrap()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let s = &out.export.summary;
    let cont = s["continuity_residual"].as_f64().unwrap_or(f64::INFINITY);
    ensure(out.max_residual <= 1e-6, || format!("pushforward residual {:.3e}", out.max_residual))?;
    ensure(cont <= 1e-9, || format!("continuity residual {cont:.3e}"))?;
    ensure(s["adjacent_pairs"].as_u64().unwrap_or(0) > 0, || "no adjacent pieces".into())?;
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{} pieces, {} adjacent pairs, residual {:.1e}, continuity {cont:.1e}, {:.2} s",
        s["piece_count"],
        s["adjacent_pairs"],
        out.max_residual,
        elapsed.as_secs_f64()
    ))
}

fn separability() -> Outcome {
    let out = run_scenario(&ScenarioConfig::bundled("fig4-triangle").unwrap()).map_err(|e| e.to_string())?;
    let sep = out.export.summary["min_separation"].as_f64().unwrap_or(-1.0);
    ensure(sep > 1e-3, || format!("minimum separation {sep:.3e}"))?;
    Ok(format!("minimum sampled separation {sep:.4}"))
}

fn determinism() -> Outcome {
    for name in bundled_names() {
        let cfg = ScenarioConfig::bundled(name).unwrap();
        let a = run_scenario(&cfg).and_then(|o| o.export.to_json()).map_err(|e| e.to_string())?;
        let b = run_scenario(&cfg).and_then(|o| o.export.to_json()).map_err(|e| e.to_string())?;
        ensure(a == b, || format!("{name} differs between runs"))?;
    }
    Ok(format!("{} bundled scenarios byte-identical", bundled_names().len()))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("preimage soundness", soundness),
        ("preimage completeness", completeness),
        ("dual-basis duality", duality),
        ("circulant structure", circulant),
        ("cell bound", cell_bound),
        ("nesting implies contraction", nesting_contraction),
        ("fig4 manifold trace", fig4),
        ("parallel manifolds stay apart", separability),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
