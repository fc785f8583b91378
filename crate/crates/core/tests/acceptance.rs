//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process fails if any criterion fails.

use std::f64::consts::TAU;
use std::time::Instant;

use kagome_lab::ansatz::{ansatz_eigenstate, eigen_residual, one_particle_state};
use kagome_lab::cli::{cmd_verify, control_points, CONTROL_FLOOR};
use kagome_lab::config::{GeometrySpec, RunConfig};
use kagome_lab::evolution::{build_evolution, check_path_consistency, Evolution};
use kagome_lab::lattice::{classify_geometry, Family, GeometryClass, ModeId, TorusConfig, Vertex};
use kagome_lab::linalg::C64;
use kagome_lab::qfock::{inner, FockSpace, ModelParams, Occupation, SectorCharge, StateVec};
use kagome_lab::spectral::{
    branch_free, branch_xxz, dual_map, elementary_f_all, one_particle_roots, q_limit_check, random_x,
    solve_system, solve_x_free, Branch, PolyFamily, SolveMode, SolveOptions,
};
use kagome_lab::verify::{diagonalize, match_spectrum, run_experiment, Diagonalizer, Prediction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn gauss_binomial(n: usize, k: usize, t: f64) -> f64 {
    let f = |a: usize, b: usize| (a..b).map(|i| 1.0 - t.powi(i as i32 + 1)).product::<f64>();
    f(n - k, n) / f(0, k)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).map(|i| (n - i) as f64 / (i + 1) as f64).product()
}

fn random_state(cfg: TorusConfig, rng: &mut ChaCha8Rng) -> StateVec {
    let mut s = StateVec::zero();
    for _ in 0..rng.gen_range(1..5) {
        let entries: Vec<(ModeId, u16)> = cfg.modes().map(|m| (m, rng.gen_range(0..3))).collect();
        s.add(
            Occupation::from_modes(cfg, &entries),
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
        );
    }
    s
}

fn algebra_suite() -> Outcome {
    let t = Instant::now();
    let cfg = TorusConfig::new(2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let q = [0.3, 0.6, 0.9][i % 3];
        let fs = FockSpace::new(cfg, ModelParams::new(q).unwrap());
        let m = cfg.mode_at(rng.gen_range(0..cfg.num_modes()));
        let psi = random_state(cfg, &mut rng);
        let phi = random_state(cfg, &mut rng);
        let kk = fs.apply_k(m, &fs.apply_k(m, &psi, true), false);
        let r1 = fs.apply_raise(m, &fs.apply_lower(m, &psi)).minus(&psi).minus(&kk.scale(c(1.0 / q)));
        let r2 = fs.apply_lower(m, &fs.apply_raise(m, &psi)).minus(&psi).minus(&kk.scale(c(q)));
        let r3 = fs
            .apply_k(m, &fs.apply_raise(m, &psi), false)
            .minus(&fs.apply_raise(m, &fs.apply_k(m, &psi, false)).scale(c(q)));
        let r4 = fs
            .apply_k(m, &fs.apply_lower(m, &psi), true)
            .minus(&fs.apply_lower(m, &fs.apply_k(m, &psi, true)).scale(c(1.0 / q)));
        let adj = (inner(&fs.apply_raise(m, &phi), &psi) - inner(&phi, &fs.apply_lower(m, &psi))).norm();
        worst = [worst, r1.max_abs(), r2.max_abs(), r3.max_abs(), r4.max_abs(), adj]
            .into_iter()
            .fold(0.0, f64::max);
    }
    let secs = t.elapsed().as_secs_f64();
    let msg = format!("1000 states, max deviation {worst:.2e}, {secs:.2}s");
    if worst <= 1e-12 && secs < 1.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn vacuum_fixed_point() -> Outcome {
    let cfg = TorusConfig::new(3).unwrap();
    let b = build_evolution(cfg, ModelParams::new(0.6).unwrap(), SectorCharge::VACUUM).unwrap();
    if b.dim() == 1 && b.matrix[[0, 0]] == c(1.0) {
        Ok("U on (0,0) is [1]".into())
    } else {
        Err(format!("got {:?}", b.matrix))
    }
}

fn sectors_up_to_two() -> Vec<SectorCharge> {
    (0..=2).flat_map(|a| (0..=2).map(move |b| SectorCharge::new(a, b))).collect()
}

fn unitarity() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut m3_secs = 0.0;
    for m in [2, 3] {
        for q in [0.3, 0.6, 0.9] {
            let t = Instant::now();
            let mut evo = Evolution::new(TorusConfig::new(m).unwrap(), ModelParams::new(q).unwrap());
            evo.block(SectorCharge::particles(2)).unwrap();
            for ch in sectors_up_to_two() {
                worst = worst.max(evo.built(ch).unwrap().unitarity_defect());
            }
            if m == 3 {
                m3_secs = f64::max(m3_secs, t.elapsed().as_secs_f64());
            }
        }
    }
    let msg = format!("max ‖U†U − I‖ = {worst:.2e}, slowest M=3 build+check {m3_secs:.1}s");
    if worst <= 1e-10 && m3_secs < 120.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn overdetermination() -> Outcome {
    let mut worst: f64 = 0.0;
    for m in [2, 3] {
        for q in [0.5, 0.9] {
            let mut evo = Evolution::new(TorusConfig::new(m).unwrap(), ModelParams::new(q).unwrap());
            for (i, ch) in sectors_up_to_two().into_iter().enumerate() {
                worst = worst.max(check_path_consistency(&mut evo, ch, 100, 17 + i as u64).unwrap());
            }
        }
    }
    let msg = format!("max column deviation {worst:.2e}");
    if worst <= 1e-10 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn displayed_actions() -> Outcome {
    let q: f64 = 0.5;
    let cfg = TorusConfig::new(2).unwrap();
    let mut evo = Evolution::new(cfg, ModelParams::new(q).unwrap());
    let fs = *evo.fock();
    let sq = (1.0 - q * q).sqrt();
    let mode = |f, v| ModeId::new(f, v);
    let unit = |modes: &[ModeId]| {
        let s = fs.create(modes);
        let n = s.norm();
        s.scale(c(1.0 / n))
    };
    let pair = |v: Vertex, k: i64| {
        [
            mode(Family::One, cfg.translate(v, k, 0)),
            mode(Family::Three, cfg.translate(v, 0, k)),
        ]
    };
    let mut worst: f64 = 0.0;
    for v in cfg.vertices() {
        let drift = evo.apply(&unit(&pair(v, 1))).unwrap().minus(&unit(&pair(v, 2)));
        let wrap_in = unit(&pair(v, 0));
        let wrap = evo
            .apply(&wrap_in)
            .unwrap()
            .minus(&unit(&[mode(Family::Two, v)]).scale(c(sq)))
            .minus(&unit(&pair(v, 1)).scale(c(q)));
        let image = evo
            .apply(&unit(&[mode(Family::Two, v)]))
            .unwrap()
            .minus(&unit(&[mode(Family::Two, v)]).scale(c(-q)))
            .minus(&unit(&pair(v, 1)).scale(c(sq)));
        worst = [worst, drift.max_abs(), wrap.max_abs(), image.max_abs()]
            .into_iter()
            .fold(0.0, f64::max);
    }
    let msg = format!("drift, wrap and impurity image at all vertices, max deviation {worst:.2e}");
    if worst <= 1e-12 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn one_particle() -> Outcome {
    let q = 0.6;
    let mut notes = Vec::new();
    let mut ok = true;
    for m in [2, 3] {
        let cfg = TorusConfig::new(m).unwrap();
        let params = ModelParams::new(q).unwrap();
        let block = build_evolution(cfg, params, SectorCharge::particles(1)).unwrap();
        let roots = one_particle_roots(m, q).unwrap();
        ok &= roots.len() == m + 1;
        let mut worst: f64 = 0.0;
        for &u in &roots {
            for v in cfg.vertices() {
                let s = one_particle_state(cfg, params, v, u);
                worst = worst.max(eigen_residual(&block, &s, u).unwrap());
            }
        }
        let spec = diagonalize(&block, cfg, Diagonalizer::Dense).unwrap();
        let preds: Vec<Prediction> = roots.iter().map(|&lambda| Prediction { lambda, branch: None }).collect();
        let r = match_spectrum(&preds, &spec, 1e-8, m * m, None);
        ok &= worst <= 1e-9 && r.all_pass();
        notes.push(format!("M={m}: {} roots, residual {worst:.1e}, {}/{} matched", roots.len(), r.passed(), preds.len()));
    }
    let msg = notes.join("; ");
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn symmetric_function_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for n in 1..=5 {
        for _ in 0..100 {
            let q = rng.gen_range(0.2..0.9);
            let xs = random_x(n, &mut rng);
            let f = elementary_f_all(&xs, &branch_free(n), q).unwrap();
            for k in 0..=n {
                let expect = q.powi(-((k * (n - k)) as i32)) * gauss_binomial(n, k, q * q);
                worst = worst.max((f[k] - expect).norm() / expect);
            }
        }
    }
    let msg = format!("N ≤ 5, 100 samples each, max relative error {worst:.2e}");
    if worst <= 1e-10 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn duality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rel = |a: C64, b: C64| (a - b).norm() / (1.0 + b.norm());
    let (mut inv, mut swap, mut fam): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..50 {
        let q = rng.gen_range(0.2..0.9);
        for n in 2..=4 {
            let xs = random_x(n, &mut rng);
            let bx: Vec<C64> = (0..n).map(|_| C64::from_polar(rng.gen_range(0.5..2.0), rng.gen_range(0.0..TAU))).collect();
            let twice = dual_map(&xs, &dual_map(&xs, &bx, q).unwrap(), q).unwrap();
            inv = twice.iter().zip(&bx).map(|(a, b)| rel(*a, *b)).fold(inv, f64::max);
        }
        let xs = random_x(2, &mut rng);
        let set = solve_x_free(&PolyFamily::q_binomial(2), &xs, q, 3, &SolveOptions::default()).unwrap();
        if set.solutions.len() != 2 {
            return Err(format!("X-free quadratic returned {} roots", set.solutions.len()));
        }
        let image = dual_map(&xs, &set.solutions[0].big_x, q).unwrap();
        swap = image.iter().zip(&set.solutions[1].big_x).map(|(a, b)| rel(*a, *b)).fold(swap, f64::max);
        for n in [2, 3] {
            let xs = random_x(n, &mut rng);
            let f = elementary_f_all(&xs, &branch_xxz(&xs, q).unwrap(), q).unwrap();
            let target = PolyFamily::q_binomial(n).values(q);
            fam = f.iter().zip(&target).map(|(a, b)| rel(*a, c(*b))).fold(fam, f64::max);
        }
    }
    let msg = format!("involution {inv:.1e}, root exchange {swap:.1e}, interacting branch vs family {fam:.1e}");
    if inv <= 1e-10 && swap <= 1e-10 && fam <= 1e-9 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn two_particle_count() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut counts = Vec::new();
    for i in 0..20 {
        let xs = random_x(2, &mut rng);
        let fam = if i % 2 == 0 { PolyFamily::binomial(2) } else { PolyFamily::q_binomial(2) };
        let set = solve_x_free(&fam, &xs, 0.6, 3, &SolveOptions::default()).unwrap();
        counts.push(set.solutions.len());
    }
    let msg = format!("solution counts {:?}", counts);
    if counts.iter().all(|&n| n == 2) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn conjecture_config(geometry: &str, family: Option<&str>) -> RunConfig {
    RunConfig {
        m: 3,
        q: 0.6,
        n: 2,
        geometry: GeometrySpec::parse(geometry).unwrap(),
        family: family.map(str::to_string),
        ..RunConfig::default()
    }
}

fn central_conjecture() -> Outcome {
    let t = Instant::now();
    let mut notes = Vec::new();
    let mut ok = true;
    for g in ["coincident", "line", "generic"] {
        let r = run_experiment(&conjecture_config(g, None)).unwrap();
        let worst = r.matches.iter().map(|m| m.distance).fold(0.0, f64::max);
        let cov = r
            .coverage
            .as_ref()
            .map_or(String::new(), |c| format!(", {} unexplained", c.unexplained.len()));
        ok &= r.all_pass() && r.pass && r.dim == 2799 && !r.matches.is_empty();
        notes.push(format!("{g} {}/{} (max dist {worst:.1e}{cov})", r.passed(), r.matches.len()));
    }
    for (g, f) in [("coincident", "binomial"), ("line", "q-binomial")] {
        let r = run_experiment(&conjecture_config(g, Some(f))).unwrap();
        let unexplained = r.coverage.as_ref().map_or(0, |c| c.unexplained.len());
        ok &= !r.pass;
        notes.push(format!("swap {f} on {g}: {}, {unexplained} unexplained", if r.pass { "passed" } else { "rejected" }));
    }
    let secs = t.elapsed().as_secs_f64();
    ok &= secs < 300.0;
    let msg = format!("{}; {secs:.0}s", notes.join("; "));
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn appendix_engine() -> Outcome {
    let (m, q) = (3, 0.6);
    let cfg = TorusConfig::new(m).unwrap();
    let params = ModelParams::new(q).unwrap();
    let block = build_evolution(cfg, params, SectorCharge::particles(2)).unwrap();
    let opts = SolveOptions::default();
    let line = classify_geometry(&[Vertex::new(0, 0), Vertex::new(1, 0)], cfg).unwrap();
    let coinc = classify_geometry(&[Vertex::ORIGIN, Vertex::ORIGIN], cfg).unwrap();
    let bin = solve_system(2, m, q, &PolyFamily::binomial(2), SolveMode::UParametrized, &opts).unwrap();
    let qbin = solve_system(2, m, q, &PolyFamily::q_binomial(2), SolveMode::UParametrized, &opts).unwrap();
    let (mut cond, mut res): (f64, f64) = (0.0, 0.0);
    for s in &bin.solutions {
        let (sys, sol, st) = ansatz_eigenstate(&block, cfg, params, &line, &s.u).unwrap();
        cond = cond.max(sol.conditions.sigma_min);
        res = res.max(eigen_residual(&block, &st, sys.lambda).unwrap());
    }
    let mut xxz = 0;
    for s in qbin.solutions.iter().filter(|s| s.branch == Branch::Xxz) {
        let (sys, sol, st) = ansatz_eigenstate(&block, cfg, params, &coinc, &s.u).unwrap();
        cond = cond.max(sol.conditions.sigma_min);
        res = res.max(eigen_residual(&block, &st, sys.lambda).unwrap());
        xxz += 1;
    }
    let mut control = f64::INFINITY;
    for geom in [&line, &coinc] {
        for us in control_points(2, 20, 42) {
            let (_, sol, _) = ansatz_eigenstate(&block, cfg, params, geom, &us).unwrap();
            control = control.min(sol.conditions.sigma_min);
        }
    }
    let msg = format!(
        "{} line + {xxz} coincident solutions: max condition {cond:.1e}, max eigen residual {res:.1e}; min over 40 controls {control:.1e}",
        bin.solutions.len()
    );
    if cond <= 1e-8 && res <= 1e-8 && control > CONTROL_FLOOR && !bin.solutions.is_empty() && xxz > 0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn q_to_one() -> Outcome {
    let eps = 1e-6;
    let mut worst: f64 = 0.0;
    let mut exact = true;
    for n in 1..=6 {
        for fam in [PolyFamily::binomial(n), PolyFamily::q_binomial(n)] {
            worst = worst.max(q_limit_check(&fam, eps));
        }
        for l in 1..=n {
            let k = n / l;
            if k * l == n && k >= l {
                let fam = PolyFamily::grid(k, l);
                worst = worst.max(q_limit_check(&fam, eps));
                let vals = fam.values(1.0 - eps);
                for (j, v) in vals.iter().enumerate() {
                    worst = worst.max((v - binomial(n, j)).abs());
                }
            }
        }
        exact &= PolyFamily::grid(n, 1).coeffs == PolyFamily::binomial(n).coeffs;
        let cfg = TorusConfig::new(n + 1).unwrap();
        let row: Vec<Vertex> = (0..n).map(|i| Vertex::new(i, 0)).collect();
        if n > 1 {
            exact &= classify_geometry(&row, cfg).unwrap().class == GeometryClass::Line;
        }
    }
    let msg = format!("max |P_n − binomial| = {worst:.1e}, grid(K,1) = line: {exact}");
    if worst <= 1e-4 && exact {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for _ in 0..2 {
        let mut cfg = conjecture_config("line", None);
        cfg.output.report = Some(dir.path().join("verify.json"));
        cmd_verify(&cfg).unwrap();
        bytes.push(std::fs::read(dir.path().join("verify.json")).unwrap());
    }
    let one = serde_json::to_vec(&run_experiment(&RunConfig::default()).unwrap()).unwrap();
    let two = serde_json::to_vec(&run_experiment(&RunConfig::default()).unwrap()).unwrap();
    let msg = format!("{} report bytes", bytes[0].len());
    if bytes[0] == bytes[1] && one == two {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 13] = [
        ("algebra suite", algebra_suite),
        ("vacuum fixed point", vacuum_fixed_point),
        ("unitarity", unitarity),
        ("overdetermination consistency", overdetermination),
        ("displayed actions", displayed_actions),
        ("one-particle eigenstates", one_particle),
        ("symmetric-function identity", symmetric_function_identity),
        ("duality", duality),
        ("two-particle solution count", two_particle_count),
        ("two-particle containment", central_conjecture),
        ("ansatz linear system", appendix_engine),
        ("q -> 1 limit", q_to_one),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let (tag, msg) = match std::panic::catch_unwind(f) {
            Ok(Ok(m)) => ("PASS", m),
            Ok(Err(m)) => ("FAIL", m),
            Err(_) => ("FAIL", "panicked".to_string()),
        };
        if tag == "FAIL" {
            failed += 1;
        }
        println!("criterion {:>2} {tag}: {name}: {msg}", i + 1);
    }
    println!("acceptance: {}/{} passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
