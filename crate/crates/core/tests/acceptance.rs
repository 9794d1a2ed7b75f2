//! Acceptance checks, one PASS/FAIL line each.
//!
//! Criteria 1-5 and 10 are exact properties and fail the run when violated.
//! Criteria 6-9 are directional reproductions measured on the desk matrix;
//! their outcome is printed as measured and does not abort the run.

mod common;

use std::path::{Path, PathBuf};
use std::time::Instant;

use common::{random_sentence, rdp_by_quadrature, REFERENCE_RDP};
use dpbias::cda::{augment, counterfactual, GenderLexicon, MixingRatio};
use dpbias::dp::{
    calibrate_sigma, epsilon_for, rdp_subsampled_gaussian, PrivacyTarget, TrainObserver, SIGMA_TOLERANCE,
};
use dpbias::metrics::{hellinger_bias, kl_bias};
use dpbias::model::{Activations, Dims, LMParams, LanguageModel};
use dpbias::runner::{aggregate, run_cell, run_matrix, worker_count, CellKey, RunSpec, Workspace, TABLE_METRICS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn desk_spec(out: &Path) -> RunSpec {
    let conf = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.conf");
    let mut spec = RunSpec::load(&conf).expect("desk config loads");
    spec.out_dir = out.to_path_buf();
    spec
}

#[derive(Default)]
struct ClipMax {
    calls: usize,
    clipped: usize,
    max_post: f64,
}

impl TrainObserver for ClipMax {
    fn on_clip(&mut self, pre: f64, post: f64) {
        self.calls += 1;
        if post < pre {
            self.clipped += 1;
        }
        self.max_post = self.max_post.max(post);
    }
}

fn clipping(ws: &Workspace, spec: &RunSpec) -> (Outcome, LanguageModel) {
    let key = CellKey {
        mode: PrivacyTarget::Epsilon(3.0),
        mixing_ratio: 0.0,
        seed: 0,
    };
    let mut obs = ClipMax::default();
    let out = run_cell(ws, spec, &key, &mut obs).expect("desk cell trains");
    let bound = spec.dp.clip + 1e-12;
    let model = LanguageModel::new(ws.vocab.clone(), out.params).unwrap();
    (
        outcome(
            obs.calls > 0 && obs.max_post <= bound,
            format!(
                "max post-clip L2 {:.15} over {} per-example gradients ({} rescaled); bound C + 1e-12 = {}",
                obs.max_post, obs.calls, obs.clipped, bound
            ),
        ),
        model,
    )
}

fn gradients() -> Outcome {
    let dims = Dims::new(7, 3, 2, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    let fixtures = 25;
    for _ in 0..fixtures {
        let data = (0..dims.param_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let params = LMParams::from_flat(dims, data).unwrap();
        let len = rng.gen_range(1..6);
        let ids: Vec<usize> = (0..len).map(|_| rng.gen_range(3..7)).collect();
        let mut grad = vec![0.0; params.len()];
        params.sentence_loss_and_grad(&ids, &mut grad, &mut Activations::default()).unwrap();
        let mut p = params.clone();
        for (i, &g) in grad.iter().enumerate() {
            let orig = p.flat()[i];
            p.flat_mut()[i] = orig + 1e-5;
            let up = p.sentence_loss(&ids, &mut Activations::default()).unwrap().0;
            p.flat_mut()[i] = orig - 1e-5;
            let down = p.sentence_loss(&ids, &mut Activations::default()).unwrap().0;
            p.flat_mut()[i] = orig;
            let fd = (up - down) / 2e-5;
            worst = worst.max((g - fd).abs() / g.abs().max(fd.abs()).max(1e-6));
        }
    }
    outcome(
        worst < 1e-4,
        format!("max relative error {worst:.3e} over {fixtures} fixtures (V=7 d=3 k=2 h=4, step 1e-5); tolerance 1e-4"),
    )
}

fn accountant() -> Outcome {
    let mut problems = Vec::new();
    for (sigma, alpha) in [(0.5, 2.0), (1.0, 32.0), (2.0, 1.5), (0.7, 256.0)] {
        if rdp_subsampled_gaussian(1.0, sigma, alpha).unwrap() != alpha / (2.0 * sigma * sigma) {
            problems.push(format!("q=1 sigma={sigma} alpha={alpha}"));
        }
    }
    let ts = [1u64, 10, 100, 1000, 10_000];
    let sigmas = [0.5, 0.8, 1.0, 2.0, 5.0];
    let qs = [0.001, 0.01, 0.05, 0.2, 1.0];
    let eps = |q: f64, s: f64, t: u64| epsilon_for(q, s, t, 1e-5).unwrap().0;
    let mut grid = [[[0.0; 5]; 5]; 5];
    for (i, &t) in ts.iter().enumerate() {
        for (j, &s) in sigmas.iter().enumerate() {
            for (k, &q) in qs.iter().enumerate() {
                grid[i][j][k] = eps(q, s, t);
            }
        }
    }
    let mut violations = 0;
    for a in 0..5 {
        for b in 0..5 {
            for c in 0..4 {
                violations += usize::from(grid[c + 1][a][b] < grid[c][a][b]); // T up
                violations += usize::from(grid[a][c + 1][b] > grid[a][c][b]); // sigma up
                violations += usize::from(grid[a][b][c + 1] < grid[a][b][c]); // q up
            }
        }
    }
    if violations > 0 {
        problems.push(format!("{violations} monotonicity violations"));
    }
    for (target, q, steps) in [(3.0, 16.0 / 10_000.0, 1875u64), (1.0, 0.01, 500), (8.0, 0.05, 100)] {
        let s = calibrate_sigma(target, 1e-5, q, steps).unwrap();
        let ok = eps(q, s, steps) <= target && eps(q, s - SIGMA_TOLERANCE, steps) > target;
        if !ok {
            problems.push(format!("calibration round trip at eps={target}"));
        }
    }
    let mut worst_ref: f64 = 0.0;
    for (q, s, a, expect) in REFERENCE_RDP {
        worst_ref = worst_ref.max((rdp_subsampled_gaussian(q, s, a).unwrap() - expect).abs() / expect);
    }
    if worst_ref >= 0.01 {
        problems.push(format!("reference mismatch {worst_ref:.3e}"));
    }
    let (q, s, a) = (0.0016, 1.2, 1.5);
    let quad = rdp_by_quadrature(q, s, a);
    let quad_err = (rdp_subsampled_gaussian(q, s, a).unwrap() - quad).abs() / quad;
    if quad_err >= 1e-5 {
        problems.push(format!("quadrature mismatch {quad_err:.3e}"));
    }
    outcome(
        problems.is_empty(),
        format!(
            "q=1 exact; 5x5x5 monotonicity violations {violations}; calibration round trips within {SIGMA_TOLERANCE}; \
             max relative deviation from reference {worst_ref:.2e} (tolerance 1e-2); quadrature {quad_err:.1e}{}",
            if problems.is_empty() { String::new() } else { format!("; problems: {}", problems.join(", ")) }
        ),
    )
}

fn cda(ws: &Workspace) -> Outcome {
    let lex: &GenderLexicon = &ws.lexicon;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut bad = 0;
    let n_random = 10_000;
    for _ in 0..n_random {
        let s = random_sentence(&mut rng, lex);
        let c = counterfactual(&s, lex);
        let (m, f) = lex.count(&s);
        if counterfactual(&c, lex) != s || c.len() != s.len() || lex.count(&c) != (f, m) {
            bad += 1;
        }
    }
    let n = ws.train.len();
    let mut sizes = Vec::new();
    for r in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let got = augment(&ws.train, MixingRatio::new(r).unwrap(), lex, 3).len();
        let expect = n + (r * n as f64).ceil() as usize;
        sizes.push((r, got, expect));
    }
    let sizes_ok = sizes.iter().all(|(_, g, e)| g == e);
    outcome(
        bad == 0 && sizes_ok,
        format!(
            "{bad} algebra failures on {n_random} random sentences; augment sizes {} for N={n}",
            sizes.iter().map(|(r, g, e)| format!("r={r}:{g}/{e}")).collect::<Vec<_>>().join(" ")
        ),
    )
}

fn null_bias(ws: &Workspace, trained: &LanguageModel) -> Outcome {
    let mut model = trained.clone();
    let pairs: Vec<_> = ws.fixtures.all_pairs().into_iter().cloned().collect();
    let before = kl_bias(&model, &pairs).unwrap();
    for (m, f) in ws.lexicon.pairs() {
        if let (Some(mi), Some(fi)) = (model.vocab.get(m), model.vocab.get(f)) {
            let row = model.params.embedding(mi).to_vec();
            model.params.embedding_mut(fi).copy_from_slice(&row);
        }
    }
    let kl = kl_bias(&model, &pairs).unwrap();
    let h = hellinger_bias(&model, &pairs).unwrap();
    outcome(
        kl == 0.0 && h == 0.0,
        format!(
            "kl_bias {kl:e}, hellinger_bias {h:e} over {} prompt pairs (trained model before tying: kl {before:.4})",
            pairs.len()
        ),
    )
}

struct Directional {
    fig1: Outcome,
    fig3: Outcome,
    table4: Outcome,
    table2: Outcome,
}

fn directional(spec: &RunSpec) -> Directional {
    let workers = worker_count(None).unwrap_or(1);
    let result = run_matrix(spec, workers).expect("desk matrix runs");
    let failures = result.failures();
    assert!(failures.is_empty(), "failed cells: {failures:?}");
    let agg = aggregate(spec, &result);
    let dp = agg.mean_row(PrivacyTarget::Epsilon(3.0), 0.0).expect("dp row");
    let np = agg.mean_row(PrivacyTarget::NonPrivate, 0.0).expect("non-private row");

    let mut higher = Vec::new();
    let mut detail = Vec::new();
    for (i, name) in TABLE_METRICS.iter().enumerate().take(6) {
        let (d, n) = (dp.metrics[i], np.metrics[i]);
        let up = matches!((d, n), (Some(d), Some(n)) if d > n);
        if up {
            higher.push(*name);
        }
        detail.push(format!("{name} {} vs {}", fmt(d), fmt(n)));
    }
    let kl_h = higher.contains(&"kl_bias") && higher.contains(&"hellinger_bias");
    let fig1 = outcome(
        higher.len() >= 4 && kl_h,
        format!(
            "DP > non-DP on {}/6 metrics at mixing ratio 0 over {} seeds (need >= 4 including kl and hellinger): {}",
            higher.len(),
            dp.n_seeds,
            detail.join(", ")
        ),
    );

    let fig3 = outcome(
        matches!((dp.final_grad_ratio, np.final_grad_ratio), (Some(d), Some(n)) if d > n),
        format!(
            "final-epoch female/male gradient L1 ratio DP {} vs non-DP {}",
            fmt(dp.final_grad_ratio),
            fmt(np.final_grad_ratio)
        ),
    );

    let gc = agg.pearson_of("gender_count_bias");
    let occ = agg.pearson_of("occupation_bias");
    let table4 = outcome(
        matches!((gc, occ), (Some(a), Some(b)) if a < 0.0 && b < 0.0),
        format!(
            "Pearson(mixing ratio, DP increase): gender_count {} occupation {} (need both < 0)",
            fmt(gc),
            fmt(occ)
        ),
    );

    let rate = TABLE_METRICS.len() - 1;
    let (d, n) = (dp.metrics[rate], np.metrics[rate]);
    let table2 = outcome(
        matches!((d, n), (Some(d), Some(n)) if n > 50.0 && d > 50.0 && d >= n),
        format!("stereotype preference rate DP {} vs non-DP {} (need both > 50 and DP >= non-DP)", fmt(d), fmt(n)),
    );
    Directional {
        fig1,
        fig3,
        table4,
        table2,
    }
}

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"))
}

fn files_under(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let bytes = std::fs::read(&p).unwrap();
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), bytes));
            }
        }
    }
    out.sort();
    out
}

fn determinism(base: &Path) -> Outcome {
    let run = |name: &str| {
        let dir = base.join(name);
        let _ = std::fs::remove_dir_all(&dir);
        let mut spec = desk_spec(&dir);
        spec.modes = vec![PrivacyTarget::Epsilon(3.0)];
        spec.mixing_ratios = vec![0.5];
        spec.seeds = vec![1];
        run_matrix(&spec, 1).expect("cell runs");
        files_under(&dir)
    };
    let (a, b) = (run("determinism-a"), run("determinism-b"));
    let same_names = a.iter().map(|f| &f.0).eq(b.iter().map(|f| &f.0));
    let differing: Vec<String> = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| x.1 != y.1)
        .map(|(x, _)| x.0.display().to_string())
        .collect();
    outcome(
        same_names && differing.is_empty(),
        format!(
            "{} files compared across two runs of one desk cell (checkpoint, reports, plot data, manifest); {} differ",
            a.len(),
            differing.len()
        ),
    )
}

struct Line {
    n: usize,
    hard: bool,
    pass: bool,
}

fn report(lines: &mut Vec<Line>, n: usize, name: &str, hard: bool, o: Outcome, secs: f64) {
    let verdict = if o.pass { "PASS" } else { "FAIL" };
    println!("criterion {n} [{name}]: {verdict} ({secs:.1}s) {}", o.detail);
    lines.push(Line { n, hard, pass: o.pass });
}

fn main() {
    let tmp = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let spec = desk_spec(&tmp.join("desk-matrix"));
    let ws = Workspace::prepare(&spec).expect("desk workspace");
    let mut lines = Vec::new();

    let t = Instant::now();
    let (o, trained) = clipping(&ws, &spec);
    report(&mut lines, 1, "clipping invariant", true, o, t.elapsed().as_secs_f64());
    let t = Instant::now();
    report(&mut lines, 2, "gradient correctness", true, gradients(), t.elapsed().as_secs_f64());
    let t = Instant::now();
    report(&mut lines, 3, "privacy accountant", true, accountant(), t.elapsed().as_secs_f64());
    let t = Instant::now();
    report(&mut lines, 4, "counterfactual augmentation", true, cda(&ws), t.elapsed().as_secs_f64());
    let t = Instant::now();
    report(&mut lines, 5, "null-bias oracle", true, null_bias(&ws, &trained), t.elapsed().as_secs_f64());

    let t = Instant::now();
    let d = directional(&spec);
    let secs = t.elapsed().as_secs_f64();
    println!("desk matrix: {} cells, {secs:.1}s shared by criteria 6-9", spec.cells().len());
    report(&mut lines, 6, "DP raises bias at mixing ratio 0", false, d.fig1, secs);
    report(&mut lines, 7, "DP widens gradient disparity", false, d.fig3, secs);
    report(&mut lines, 8, "mixing ratio shrinks the DP increase", false, d.table4, secs);
    report(&mut lines, 9, "stereotype preference under DP", false, d.table2, secs);

    let t = Instant::now();
    report(&mut lines, 10, "determinism", true, determinism(&tmp), t.elapsed().as_secs_f64());

    let failed = |hard: bool| -> Vec<usize> { lines.iter().filter(|l| l.hard == hard && !l.pass).map(|l| l.n).collect() };
    println!(
        "summary: {}/{} criteria pass; exact-property failures {:?}; directional criteria not reproduced {:?}",
        lines.iter().filter(|l| l.pass).count(),
        lines.len(),
        failed(true),
        failed(false)
    );
    if !failed(true).is_empty() {
        std::process::exit(1);
    }
}
