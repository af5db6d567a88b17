//! Acceptance gate: ten numbered end-to-end checks covering initial
//! conditions, oracle equivalence, classical structure, the quantum
//! advantage window, size/detuning scaling, invariances, the photonic
//! model, and CLI determinism.
//!
//! Each check prints one `criterion NN PASS ...` line (visible with
//! `--nocapture`); a failed assertion marks the criterion failed. Checks
//! with a stated runtime budget enforce it on their own wall-clock, so the
//! suite serializes through a gate mutex to keep those timings honest.

use std::path::Path;
use std::process::Command;
use std::sync::{Mutex, MutexGuard};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use ctqw_core::generators::{classical_generator, quantum_hamiltonian, HamiltonianMatrix, SearchParams};
use ctqw_core::lattice::{
    build_from_coords, build_hex_patch, build_paper31, resolve_target, Graph, LatticeCoord,
    TargetSpec,
};
use ctqw_core::photonics::{
    fit_coupling_law, input_field, intensity_distribution, load_presets, preset_by_name,
    propagate_array, rotation_asymmetry, BeamSpec, WaveguideArraySpec,
};
use ctqw_core::propagator::{
    evolve_classical, evolve_classical_on_grid, evolve_quantum, expm, ode_oracle,
    schroedinger_generator, to_complex, ComplexState, ProbabilityVector, SpectralPropagator,
};
use ctqw_core::search::{
    beta_size_surface, beta_time_heatmap, ratio_series, run_search, scaling_study, uniform_state,
};

static GATE: Mutex<()> = Mutex::new(());

fn gate() -> MutexGuard<'static, ()> {
    GATE.lock().unwrap_or_else(|e| e.into_inner())
}

fn dense_grid(t_max: f64, step: f64) -> Vec<f64> {
    let steps = (t_max / step).round() as usize;
    (0..=steps).map(|k| k as f64 * step).collect()
}

fn budget(name: &str, elapsed: Duration, limit: Duration) {
    assert!(
        elapsed <= limit,
        "criterion {name} FAIL: took {elapsed:.2?}, budget {limit:.2?}"
    );
}

#[test]
fn criterion_01_initial_conditions() {
    let _g = gate();
    let start = Instant::now();
    let g = build_paper31();
    for spec in [TargetSpec::Center, TargetSpec::Shifted] {
        let series = run_search(&g, spec, 4.16, &[0.0]).unwrap();
        let pq0 = series.quantum_target_prob()[0];
        let pc0 = series.classical_target_prob[0];
        let r0 = ratio_series(&series).unwrap().ratio[0];
        assert!((pq0 - 1.0 / 31.0).abs() < 1e-10, "target {spec}: pq(0)={pq0}");
        assert!((pc0 - 1.0 / 31.0).abs() < 1e-10, "target {spec}: pc(0)={pc0}");
        assert!((r0 - 1.0).abs() < 1e-10, "target {spec}: R(0)={r0}");
    }
    let elapsed = start.elapsed();
    budget("01", elapsed, Duration::from_secs(1));
    println!("criterion 01 PASS initial probabilities 1/31 and R(0)=1 within 1e-10 ({elapsed:.2?})");
}

fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = rng.random_range(-0.08..0.08);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

fn random_state(n: usize, rng: &mut ChaCha8Rng) -> ComplexState {
    let v = DVector::from_iterator(
        n,
        (0..n).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))),
    );
    ComplexState::new(v).normalized()
}

fn random_patch(rng: &mut ChaCha8Rng) -> Graph {
    loop {
        let mut coords = Vec::new();
        for i in -2..=2_i32 {
            for j in -2..=2_i32 {
                if rng.random_bool(0.6) {
                    coords.push(LatticeCoord::new(i, j));
                }
            }
        }
        if coords.len() >= 2 {
            return build_from_coords(&coords).expect("grid coords are distinct");
        }
    }
}

fn oracle_steps(m: &DMatrix<Complex64>, t: f64) -> usize {
    let nrm: f64 = (0..m.ncols())
        .map(|c| m.column(c).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    (1000.0 * (nrm * t + 1.0)).ceil() as usize
}

#[test]
fn criterion_02_oracle_equivalence() {
    let _g = gate();
    let start = Instant::now();
    let check_times = [2.0, 5.0];

    // 20 random symmetric Hamiltonians: spectral evolution against RK4.
    let quantum_cases: Vec<(DMatrix<f64>, ComplexState)> = (0..20_u64)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(0xACCE + seed);
            let m = random_symmetric(31, &mut rng);
            let psi = random_state(31, &mut rng);
            (m, psi)
        })
        .collect();
    let quantum_worst = quantum_cases
        .par_iter()
        .map(|(m, psi0)| {
            let h = HamiltonianMatrix::from_symmetric(m.clone()).unwrap();
            let prop = SpectralPropagator::new(&h).unwrap();
            let gen = schroedinger_generator(&h);
            let mut worst = 0.0_f64;
            for &t in &check_times {
                let spectral = prop.evolve(psi0, t).unwrap();
                let reference =
                    ode_oracle(&gen, &psi0.amplitudes, t, oracle_steps(&gen, t)).unwrap();
                for (a, b) in spectral.amplitudes.iter().zip(reference.iter()) {
                    worst = worst.max((a - b).norm());
                }
            }
            worst
        })
        .reduce(|| 0.0, f64::max);
    assert!(quantum_worst < 1e-8, "quantum worst deviation {quantum_worst}");

    // 10 random lattice patches with a sink: Padé expm against RK4.
    let classical_worst = (0..10_u64)
        .into_par_iter()
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(0xC1A55 + seed);
            let g = random_patch(&mut rng);
            let target = rng.random_range(0..g.n());
            let lc = classical_generator(&g, Some(target)).unwrap();
            let p0 = ProbabilityVector::uniform(g.n());
            let gen = to_complex(&(-lc.entries()));
            let v0 = DVector::from_iterator(
                g.n(),
                p0.values().iter().map(|&p| Complex64::new(p, 0.0)),
            );
            let mut worst = 0.0_f64;
            for &t in &check_times {
                let pade = evolve_classical(&lc, &p0, 1.0, t).unwrap();
                let reference = ode_oracle(&gen, &v0, t, oracle_steps(&gen, t)).unwrap();
                for (j, z) in reference.iter().enumerate() {
                    worst = worst.max((pade.get(j) - z.re).abs()).max(z.im.abs());
                }
            }
            worst
        })
        .reduce(|| 0.0, f64::max);
    assert!(classical_worst < 1e-8, "classical worst deviation {classical_worst}");

    let elapsed = start.elapsed();
    budget("02", elapsed, Duration::from_secs(30));
    println!(
        "criterion 02 PASS 20 Hamiltonians / 10 sink generators within 1e-8 of RK4 \
         (worst {quantum_worst:.2e} / {classical_worst:.2e}, {elapsed:.2?})"
    );
}

#[test]
fn criterion_03_classical_structure() {
    let _g = gate();
    let g = build_paper31();
    let target = resolve_target(&g, TargetSpec::Center).unwrap().unwrap();
    let lc = classical_generator(&g, Some(target)).unwrap();

    // Column-stochastic semigroup at three magnitudes of γt.
    for t in [0.1, 1.0, 10.0] {
        let e = expm(&(lc.entries() * -t)).unwrap();
        for c in 0..e.ncols() {
            let col = e.column(c);
            let sum: f64 = col.iter().sum();
            assert!((sum - 1.0).abs() < 1e-10, "column {c} sums to {sum} at γt={t}");
            for &v in col.iter() {
                assert!(v > -1e-10, "negative entry {v} in column {c} at γt={t}");
            }
        }
    }

    // Monotone capture probability on a 500-point grid.
    let grid: Vec<f64> = (0..500).map(|k| k as f64 * 0.01).collect();
    let p0 = ProbabilityVector::uniform(g.n());
    let dists = evolve_classical_on_grid(&lc, &p0, 1.0, &grid).unwrap();
    for w in dists.windows(2) {
        assert!(
            w[1].get(target) >= w[0].get(target) - 1e-12,
            "capture probability decreased: {} -> {}",
            w[0].get(target),
            w[1].get(target)
        );
    }

    // Two coupled sites, sink on one: p_sink(ln 2) = 3/4 exactly.
    let pair = build_from_coords(&[LatticeCoord::new(0, 0), LatticeCoord::new(1, 0)]).unwrap();
    let lc2 = classical_generator(&pair, Some(0)).unwrap();
    let p = evolve_classical(&lc2, &ProbabilityVector::uniform(2), 1.0, std::f64::consts::LN_2)
        .unwrap();
    assert!((p.get(0) - 0.75).abs() < 1e-10, "p_sink(ln 2) = {}", p.get(0));

    println!("criterion 03 PASS stochastic columns, monotone capture, p(ln 2)=0.75 within 1e-10");
}

#[test]
fn criterion_04_advantage_window() {
    let _g = gate();
    let start = Instant::now();
    let g = build_paper31();
    let grid = dense_grid(5.0, 1e-3);
    for spec in [TargetSpec::Center, TargetSpec::Shifted] {
        let series = run_search(&g, spec, 4.16, &grid).unwrap();
        let ratios = ratio_series(&series).unwrap();
        let r = &ratios.ratio;
        let peak = (0..r.len()).max_by(|&a, &b| r[a].total_cmp(&r[b])).unwrap();
        assert!(r[peak] > 1.5, "target {spec}: max R = {}", r[peak]);
        let mut lo = peak;
        while lo > 0 && r[lo - 1] > 1.0 {
            lo -= 1;
        }
        let mut hi = peak;
        while hi + 1 < r.len() && r[hi + 1] > 1.0 {
            hi += 1;
        }
        // The window around the peak must be contiguous, strictly inside
        // (0, 5), and of nonzero width.
        assert!(lo > 0, "target {spec}: window reaches γt=0");
        assert!(hi + 1 < r.len(), "target {spec}: window reaches γt=5");
        assert!(grid[hi] > grid[lo], "target {spec}: empty window");
        println!(
            "criterion 04 info target {spec}: window γt ∈ [{:.3}, {:.3}], max R = {:.3}",
            grid[lo], grid[hi], r[peak]
        );
    }
    let elapsed = start.elapsed();
    budget("04", elapsed, Duration::from_secs(10));
    println!("criterion 04 PASS contiguous R>1 windows with max R>1.5 for both targets ({elapsed:.2?})");
}

const RING_TARGETS: [TargetSpec; 3] =
    [TargetSpec::Center, TargetSpec::FirstNeighbor, TargetSpec::SecondNeighbor];

#[test]
fn criterion_05_size_scaling() {
    let _g = gate();
    let start = Instant::now();
    let layers: Vec<u32> = (1..=5).collect();
    let records = scaling_study(&layers, &RING_TARGETS, 4.0).unwrap();
    // 15 combinations minus the second-neighbor ring missing at layers=1.
    assert_eq!(records.len(), 14, "unexpected record count");
    let sizes: Vec<usize> = records.iter().map(|r| r.n).collect();
    for n in [7, 19, 37, 61, 91] {
        assert!(sizes.contains(&n), "missing patch size n={n}");
    }
    for rec in &records {
        assert!(
            rec.r_opt > 1.0,
            "n={} target {}: r_opt={}",
            rec.n,
            rec.target_kind,
            rec.r_opt
        );
        assert!(
            rec.pq_opt > rec.pc_opt,
            "n={} target {}: pq={} pc={}",
            rec.n,
            rec.target_kind,
            rec.pq_opt,
            rec.pc_opt
        );
    }
    let elapsed = start.elapsed();
    budget("05", elapsed, Duration::from_secs(120));
    println!("criterion 05 PASS r_opt>1 and pq>pc for all {} size/target points ({elapsed:.2?})", records.len());
}

#[test]
fn criterion_06_robustness_surface() {
    let _g = gate();
    let start = Instant::now();
    let layers: Vec<u32> = (1..=4).collect();
    let betas: Vec<f64> = (2..=8).map(f64::from).collect();
    let records = beta_size_surface(&layers, &RING_TARGETS, &betas).unwrap();
    // (4 sizes × 3 targets − 1 missing ring) × 7 detunings.
    assert_eq!(records.len(), 77, "unexpected record count");
    let violations: Vec<String> = records
        .iter()
        .filter(|rec| rec.r_opt <= 1.0)
        .map(|rec| {
            format!(
                "n={} target {} β={}: r_opt={:.15} at t_opt={:.3}",
                rec.n, rec.target_kind, rec.beta_over_gamma, rec.r_opt, rec.t_opt
            )
        })
        .collect();

    // Detuning sensitivity on the 31-site layout: shifting β/γ by ±0.05
    // moves the target probability by less than 0.02 at every γt ≤ 5.
    let g = build_paper31();
    let grid = dense_grid(5.0, 1e-3);
    let heat =
        beta_time_heatmap(&g, TargetSpec::Center, &[4.11, 4.16, 4.21], &grid).unwrap();
    let mut sup = 0.0_f64;
    for k in 0..grid.len() {
        sup = sup.max((heat[0][k] - heat[1][k]).abs());
        sup = sup.max((heat[2][k] - heat[1][k]).abs());
    }
    assert!(sup < 0.02, "detuning sensitivity {sup}");

    let elapsed = start.elapsed();
    if violations.is_empty() {
        println!(
            "criterion 06 PASS r_opt>1 on all {} surface points, β-sensitivity {:.4} < 0.02 ({elapsed:.2?})",
            records.len(),
            sup
        );
    } else {
        // Known model behavior, not a numerical artifact: for the 2N target
        // at the weakest detuning the walker never beats the baseline, so
        // max_t R(t) is attained at t=0 where R is identically 1. Verified
        // against an independent dense rescan on γt ∈ (0, 30]. The advantage
        // holds on the remaining points (75 of 77).
        println!(
            "criterion 06 FAIL r_opt>1 holds on {}/{} surface points; violations: {} \
             (β-sensitivity clause passed: {:.4} < 0.02, {elapsed:.2?})",
            records.len() - violations.len(),
            records.len(),
            violations.join("; "),
            sup
        );
        panic!(
            "r_opt > 1 fails on {} of {} points: {}",
            violations.len(),
            records.len(),
            violations.join("; ")
        );
    }
}

#[test]
fn criterion_07_time_scale_invariance() {
    let _g = gate();
    let g = build_paper31();
    let target = resolve_target(&g, TargetSpec::Center).unwrap().unwrap();
    let t = 1.7;

    let h1 = quantum_hamiltonian(&g, &SearchParams::new(1.0, 4.16, Some(target))).unwrap();
    let h10 = quantum_hamiltonian(&g, &SearchParams::new(10.0, 41.6, Some(target))).unwrap();
    let psi0 = uniform_state(g.n());
    let a = evolve_quantum(&h1, &psi0, t).unwrap();
    let b = evolve_quantum(&h10, &psi0, t / 10.0).unwrap();
    let worst = a
        .amplitudes
        .iter()
        .zip(b.amplitudes.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max);
    assert!(worst < 1e-10, "quantum rescaling deviation {worst}");

    let lc = classical_generator(&g, Some(target)).unwrap();
    let p0 = ProbabilityVector::uniform(g.n());
    let pa = evolve_classical(&lc, &p0, 1.0, t).unwrap();
    let pb = evolve_classical(&lc, &p0, 10.0, t / 10.0).unwrap();
    let worst_c = (0..g.n())
        .map(|j| (pa.get(j) - pb.get(j)).abs())
        .fold(0.0, f64::max);
    assert!(worst_c < 1e-10, "classical rescaling deviation {worst_c}");

    println!("criterion 07 PASS (γ,β,t) equals (10γ,10β,t/10) within 1e-10");
}

#[test]
fn criterion_08_photonic_consistency() {
    let _g = gate();
    let presets = load_presets().unwrap();
    assert_eq!(presets.len(), 4);

    // Exponential coupling law reproduces every measured γ within 5%.
    let points: Vec<(f64, f64)> =
        presets.iter().map(|p| (p.spacing_um, p.gamma_per_mm)).collect();
    let (gamma0, a0) = fit_coupling_law(&points).unwrap();
    for p in &presets {
        let predicted = gamma0 * (-p.spacing_um / a0).exp();
        let rel = (predicted - p.gamma_per_mm).abs() / p.gamma_per_mm;
        assert!(rel < 0.05, "preset {}: fit error {:.3}%", p.name, rel * 100.0);
    }

    // Nominal γ·length agrees with the recorded values to the printed digits.
    for p in &presets {
        for (len, table) in p.lengths_mm.iter().zip(p.gamma_t_table.iter()) {
            let computed = p.gamma_t(*len);
            assert!(
                (computed - table).abs() <= 0.005,
                "preset {} length {len} mm: γt {computed} vs {table}",
                p.name
            );
        }
    }

    // Uniform input into a target-detuned array concentrates on the target.
    let preset_a = preset_by_name("A").unwrap();
    let g = build_paper31();
    let target = resolve_target(&g, TargetSpec::Center).unwrap().unwrap();
    let length_mm = 2.32 / preset_a.gamma_per_mm;
    let spec = WaveguideArraySpec::from_preset(g.clone(), &preset_a, Some(target), length_mm);
    let out = propagate_array(&spec, &input_field(&spec, &BeamSpec::uniform()).unwrap()).unwrap();
    let dist = intensity_distribution(&out).unwrap();
    let argmax = (0..dist.n())
        .max_by(|&a, &b| dist.get(a).total_cmp(&dist.get(b)))
        .unwrap();
    assert_eq!(argmax, target, "light concentrates on site {argmax}, target is {target}");

    // A 2 mrad input tilt visibly breaks the sixfold output symmetry.
    let flat = WaveguideArraySpec::from_preset(g.clone(), &preset_a, None, preset_a.lengths_mm[1]);
    let straight = propagate_array(&flat, &input_field(&flat, &BeamSpec::uniform()).unwrap())
        .unwrap()
        .site_probabilities();
    let tilted = propagate_array(
        &flat,
        &input_field(&flat, &BeamSpec::uniform().with_tilt(2.0, 0.0)).unwrap(),
    )
    .unwrap()
    .site_probabilities();
    let asym_straight = rotation_asymmetry(&flat.graph, &straight);
    let asym_tilted = rotation_asymmetry(&flat.graph, &tilted);
    assert!(asym_straight < 1e-9, "straight-in asymmetry {asym_straight}");
    assert!(
        asym_tilted >= 10.0 * 1e-9 && asym_tilted >= 10.0 * asym_straight,
        "tilted asymmetry {asym_tilted} vs straight {asym_straight}"
    );

    println!(
        "criterion 08 PASS coupling fit <5%, γt table ±0.005, argmax on target, \
         tilt asymmetry {asym_tilted:.3e} vs {asym_straight:.1e}"
    );
}

#[test]
fn criterion_09_rotation_symmetry() {
    let _g = gate();
    let g = build_hex_patch(2);
    let target = resolve_target(&g, TargetSpec::Center).unwrap().unwrap();
    let h = quantum_hamiltonian(&g, &SearchParams::new(1.0, 4.16, Some(target))).unwrap();
    let prop = SpectralPropagator::new(&h).unwrap();
    let coeffs = prop.project(&uniform_state(g.n()));
    let mut rng = ChaCha8Rng::seed_from_u64(0x60_1d);
    let mut worst = 0.0_f64;
    for _ in 0..20 {
        let t = rng.random_range(0.0..10.0);
        let probs = prop.evolve_projected(&coeffs, t).site_probabilities();
        worst = worst.max(rotation_asymmetry(&g, &probs));
    }
    assert!(worst < 1e-9, "rotation asymmetry {worst}");
    println!("criterion 09 PASS sixfold symmetry within 1e-9 at 20 random times (worst {worst:.2e})");
}

fn scaling_csv_bytes(dir: &Path, threads: Option<usize>) -> Vec<u8> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ctqw"));
    cmd.env_remove("CTQW_OUTPUT_DIR");
    cmd.args(["scaling", "--layers", "1..3", "--targets", "C,1N", "--beta", "4"]);
    if let Some(k) = threads {
        cmd.arg("--threads").arg(k.to_string());
    }
    cmd.arg("--output-dir").arg(dir);
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "scaling run failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    std::fs::read(dir.join("scaling.csv")).expect("scaling.csv written")
}

#[test]
fn criterion_10_cli_determinism() {
    let _g = gate();
    let dirs: Vec<tempfile::TempDir> =
        (0..4).map(|_| tempfile::tempdir().unwrap()).collect();
    let first = scaling_csv_bytes(dirs[0].path(), None);
    let second = scaling_csv_bytes(dirs[1].path(), None);
    let single = scaling_csv_bytes(dirs[2].path(), Some(1));
    let eight = scaling_csv_bytes(dirs[3].path(), Some(8));
    assert!(!first.is_empty());
    assert_eq!(first, second, "repeated runs differ");
    assert_eq!(single, eight, "--threads 1 vs --threads 8 differ");
    assert_eq!(first, single, "default threads vs --threads 1 differ");
    println!("criterion 10 PASS byte-identical outputs across reruns and thread counts");
}
