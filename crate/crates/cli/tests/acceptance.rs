//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Runs without the libtest harness so the lines are
//! always shown.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use percolab_core::estimators::{
    estimate_lambda_c, estimate_theta, fkg_sanity, giant_statistics, mecke_check_ns, mecke_check_second,
    BisectionOptions, CrossingCriterion, GraphEvent, LambdaCBracket,
};
use percolab_core::events::{
    block_field_sample, dependence_check, estimate_event_f, tune_block_params, EventSpecF, GridExtent,
};
use percolab_core::graph::{brute_force_pairs, build_edges, candidate_pairs, component_of, connected_components};
use percolab_core::growth::{grow_cluster, BoxedSource, ClusterStatus, GrowthOptions, SeedRegion, StoppingRule};
use percolab_core::model::{expected_degree, sample_points, BoxSpec, ConnectionFunction, PalmPointSet, VertexSet};
use percolab_core::stats::{combined_sigma, median};

type Verdict = Result<String, String>;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn nonincreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] <= w[0])
}

fn default_rule() -> StoppingRule {
    StoppingRule::new(10_000, 60.0).unwrap()
}

/// Shared supercritical runs of the first two criteria.
struct Supercritical {
    lambda_theta: f64,
    lambda_theta_se: f64,
    l1: Vec<(f64, f64)>,
    l2: Vec<f64>,
}

fn supercritical() -> Supercritical {
    let phi = ConnectionFunction::unit_disk();
    let lambda = 2.0;
    let theta = estimate_theta(&phi, lambda, &default_rule(), 10_000, 101).unwrap();
    let mut l1 = Vec::new();
    let mut l2 = Vec::new();
    for s in [32.0, 64.0, 128.0] {
        let g = giant_statistics(&phi, lambda, s, 200, 102).unwrap();
        let a = g.l1.unwrap();
        l1.push((a.value, a.std_error));
        l2.push(g.l2.unwrap().value);
    }
    Supercritical {
        lambda_theta: lambda * theta.theta_hat.value,
        lambda_theta_se: lambda * theta.theta_hat.std_error,
        l1,
        l2,
    }
}

fn giant_law(run: &Supercritical) -> Verdict {
    let gaps: Vec<f64> = run.l1.iter().map(|(m, _)| (m - run.lambda_theta).abs()).collect();
    let (_, se) = run.l1[2];
    let sigma = (se * se + run.lambda_theta_se * run.lambda_theta_se).sqrt();
    let tol = f64::max(0.02, 3.0 * sigma);
    check(
        nonincreasing(&gaps) && gaps[2] <= tol,
        format!("lambda*theta = {:.4}, gaps {gaps:.4?}, tolerance {tol:.4}", run.lambda_theta),
    )
}

fn second_component(run: &Supercritical) -> Verdict {
    check(
        nonincreasing(&run.l2) && run.l2[2] <= 0.01,
        format!("mean L2/s^2 {:.5?}", run.l2),
    )
}

fn subcritical_law() -> Verdict {
    let phi = ConnectionFunction::unit_disk();
    let medians: Vec<f64> = [32.0, 64.0, 128.0]
        .iter()
        .map(|&s| {
            let g = giant_statistics(&phi, 0.5, s, 200, 103).unwrap();
            median(&g.rows.iter().map(|r| r.l1_frac).collect::<Vec<_>>())
        })
        .collect();
    check(
        medians.windows(2).all(|w| w[1] < w[0]) && medians[2] <= 0.01,
        format!("median L1/s^2 {medians:.5?}"),
    )
}

fn first_mecke() -> Verdict {
    let phi = ConnectionFunction::unit_disk();
    let mut detail = Vec::new();
    let mut ok = true;
    for (lambda, s) in [(1.0, 16.0), (2.0, 32.0)] {
        let r = mecke_check_ns(&phi, lambda, 1.0, s, 2_000, 104).unwrap();
        ok &= r.compatible;
        detail.push(format!("lambda={lambda} s={s}: {:.3} vs {:.3} (z {:.2})", r.lhs.value, r.rhs.value, r.z_score()));
    }
    check(ok, detail.join("; "))
}

fn second_mecke() -> Verdict {
    let phi = ConnectionFunction::unit_disk();
    let r = mecke_check_second(&phi, 2.0, 64.0, 2_000, 105).unwrap();
    check(
        r.identity.compatible && r.factorization_ok,
        format!(
            "identity {:.1} vs {:.1} (z {:.2}); factorization gap {:.4} <= 3*{:.4}+0.02",
            r.identity.lhs.value,
            r.identity.rhs.value,
            r.identity.z_score(),
            r.factorization_gap,
            r.factorization_sigma
        ),
    )
}

fn eager_lazy_coupling() -> Verdict {
    let phi = ConnectionFunction::unit_disk();
    let bounds = BoxSpec::new(8.0).unwrap();
    let mut mismatches = 0;
    let mut total = 0;
    for r in 0..100 {
        let palm = PalmPointSet::with_origin(sample_points(1.0, bounds, 106, r).unwrap());
        let origin = palm.added_index(0);
        let mut eager: Vec<u64> = component_of(&build_edges(&palm, &phi), origin)
            .into_iter()
            .map(|i| palm.key(i))
            .collect();
        let mut source = BoxedSource::new(&palm, &phi);
        let res = grow_cluster(
            &mut source,
            &SeedRegion::Vertices(vec![origin]),
            &phi,
            &StoppingRule::size_only(1_000_000).unwrap(),
            &GrowthOptions::default(),
        )
        .unwrap();
        let mut lazy = res.keys.clone();
        eager.sort_unstable();
        lazy.sort_unstable();
        total += eager.len();
        if res.status != ClusterStatus::Exhausted || eager != lazy {
            mismatches += 1;
        }
    }
    check(mismatches == 0, format!("{mismatches} mismatches over 100 instances ({total} cluster vertices)"))
}

/// Component labels by breadth-first search over an adjacency list,
/// canonicalized to the smallest vertex of each component.
fn bfs_labels(adjacency: &[Vec<usize>]) -> Vec<usize> {
    let mut label = vec![usize::MAX; adjacency.len()];
    for root in 0..adjacency.len() {
        if label[root] != usize::MAX {
            continue;
        }
        label[root] = root;
        let mut queue = VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            for &w in &adjacency[v] {
                if label[w] == usize::MAX {
                    label[w] = root;
                    queue.push_back(w);
                }
            }
        }
    }
    label
}

fn component_oracle() -> Verdict {
    let phi = ConnectionFunction::linear_ramp(1.0).unwrap();
    let bounds = BoxSpec::new(8.0).unwrap();
    let mut mismatches = 0;
    for r in 0..100u64 {
        let lambda = [0.5, 1.0, 2.0][(r % 3) as usize];
        let pts = sample_points(lambda, bounds, 107, r).unwrap();
        let edges = build_edges(&pts, &phi);
        let summary = connected_components(&edges, pts.len(), true);
        let labels = summary.labels.unwrap();
        let oracle = bfs_labels(&edges.adjacency());
        let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
        for &l in &oracle {
            *sizes.entry(l).or_insert(0) += 1;
        }
        let mut oracle_sizes: Vec<usize> = sizes.into_values().collect();
        oracle_sizes.sort_unstable_by(|a, b| b.cmp(a));
        if labels != oracle || summary.sizes != oracle_sizes {
            mismatches += 1;
        }
    }
    check(mismatches == 0, format!("{mismatches} mismatches over 100 instances"))
}

fn cell_list_completeness() -> Verdict {
    let mut mismatches = 0;
    let mut pairs = 0;
    for r in 0..100u64 {
        let range = [1.0, 0.7, 2.5][(r % 3) as usize];
        let lambda = 0.5 + (r % 5) as f64 * 0.5;
        let pts = sample_points(lambda, BoxSpec::new(12.0).unwrap(), 108, r).unwrap();
        let fast = candidate_pairs(&pts, range);
        pairs += fast.len();
        if fast != brute_force_pairs(&pts, range) {
            mismatches += 1;
        }
    }
    check(mismatches == 0, format!("{mismatches} mismatches over 100 instances ({pairs} pairs)"))
}

fn degree_calibration() -> Verdict {
    let phi = ConnectionFunction::unit_disk();
    let bounds = BoxSpec::new(64.0).unwrap();
    let (mut total, mut observed) = (0u64, 0u64);
    let mut r = 0;
    while observed < 100_000 {
        let pts = sample_points(1.0, bounds, 109, r).unwrap();
        for (p, d) in pts.points.iter().zip(build_edges(&pts, &phi).degrees()) {
            if bounds.distance_to_boundary(*p) > phi.range() {
                total += u64::from(d);
                observed += 1;
            }
        }
        r += 1;
    }
    let mean = total as f64 / observed as f64;
    let target = expected_degree(&phi, 1.0).unwrap();
    let rel = (mean / target - 1.0).abs();
    check(rel <= 0.01, format!("mean degree {mean:.4} over {observed} vertices, relative error {rel:.4}"))
}

fn lambda_c_bracketing() -> Verdict {
    let unit = ConnectionFunction::unit_disk();
    let criterion = CrossingCriterion::default();
    let options = BisectionOptions::default();
    let a = estimate_lambda_c(&unit, &[64.0, 128.0], &criterion, 110, &options).unwrap();
    let wide = unit.rescaled(2.0).unwrap();
    let b = estimate_lambda_c(&wide, &[128.0, 256.0], &criterion, 110, &options).unwrap();
    let scaled = LambdaCBracket {
        lower: 4.0 * b.lower,
        upper: 4.0 * b.upper,
        ..b.clone()
    };
    let meets_window = a.lower <= 1.6 && a.upper >= 1.3;
    let overlap = scaled.lower <= a.upper && a.lower <= scaled.upper;
    let mid = |x: &LambdaCBracket| 0.5 * (x.lower + x.upper);
    let consistent = overlap || (mid(&a) - mid(&scaled)).abs() <= a.width() + scaled.width();
    check(
        a.width() <= 0.1 && meets_window && consistent,
        format!(
            "unit range [{:.4}, {:.4}]; range 2 times 4 [{:.4}, {:.4}]",
            a.lower, a.upper, scaled.lower, scaled.upper
        ),
    )
}

/// Independent block-field samples. A single sample centres on its own
/// mean, which biases far-pair correlations negative whenever near sites
/// are positively correlated.
const BLOCK_SAMPLES: u64 = 8;

fn renormalization_events() -> Verdict {
    let phi = ConnectionFunction::unit_disk();
    let lambda = 2.0;
    let tuned = tune_block_params(&[1.0, 2.0], &[8.0, 10.0, 14.0], lambda, &phi, 500, 111).unwrap();
    let p = tuned.params;
    let samples: Vec<_> = (0..BLOCK_SAMPLES)
        .map(|i| block_field_sample(&p, &phi, &GridExtent::square(20), 112 + i).unwrap())
        .collect();
    let density = samples.iter().map(|s| s.density()).sum::<f64>() / samples.len() as f64;
    let dep = dependence_check(&samples, 8).unwrap();
    check(
        tuned.u.value >= 0.8
            && tuned.f.value >= 0.8
            && density >= 0.7
            && dep.regions_disjoint
            && dep.within_three_sigma,
        format!(
            "K={} M={}: U {:.3}, F {:.3}, P[X=1] {:.3} over {} samples; corr {:.4} vs null {:.4} (sigma {:.4}), disjoint {}",
            p.k,
            p.m,
            tuned.u.value,
            tuned.f.value,
            density,
            BLOCK_SAMPLES,
            dep.correlation,
            dep.null_correlation,
            dep.sigma,
            dep.regions_disjoint
        ),
    )
}

fn monotonicity() -> Verdict {
    let phi = ConnectionFunction::unit_disk();
    let thetas: Vec<_> = [0.8, 1.2, 1.6, 2.0, 2.4]
        .iter()
        .map(|&l| estimate_theta(&phi, l, &default_rule(), 2_000, 113).unwrap().theta_hat)
        .collect();
    let theta_ok = thetas
        .windows(2)
        .all(|w| w[1].value >= w[0].value - 3.0 * combined_sigma(&w[0], &w[1]));
    let fs: Vec<_> = [1.6, 2.0, 2.4]
        .iter()
        .map(|&l| estimate_event_f(&EventSpecF::new(2.0, 8.0, l).unwrap(), &phi, 2_000, 114).unwrap())
        .collect();
    let f_ok = fs
        .windows(2)
        .all(|w| w[1].value >= w[0].value - 3.0 * combined_sigma(&w[0], &w[1]));
    let pairs = [
        (GraphEvent::LargestAtLeast { min_order: 1 }, GraphEvent::LargestAtLeast { min_order: 1 }),
        (GraphEvent::LargestAtLeast { min_order: 900 }, GraphEvent::DiskToBoundary { radius: 1.0 }),
        (GraphEvent::DiskToBoundary { radius: 2.0 }, GraphEvent::DiskToBoundary { radius: 1.0 }),
    ];
    let cov = fkg_sanity(&phi, 2.0, 32.0, &pairs, 2_000, 115).unwrap();
    let fkg_ok = cov.iter().all(|c| c.nonnegative);
    check(
        theta_ok && f_ok && fkg_ok,
        format!(
            "theta {:.4?}; F {:.4?}; covariances {:.4?}",
            thetas.iter().map(|t| t.value).collect::<Vec<_>>(),
            fs.iter().map(|f| f.value).collect::<Vec<_>>(),
            cov.iter().map(|c| c.covariance).collect::<Vec<_>>()
        ),
    )
}

fn run_cli(dir: &Path, args: &[&str], workers: usize) -> Result<(), String> {
    let out = dir.join(format!("w{workers}"));
    let status = Command::new(env!("CARGO_BIN_EXE_percolab"))
        .args(args)
        .arg("--workers")
        .arg(workers.to_string())
        .arg("--out")
        .arg(&out)
        .env_remove("PERCOLAB_WORKERS")
        .output()
        .map_err(|e| e.to_string())?;
    if status.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&status.stderr)))
    }
}

/// Data files of a run directory, without the manifest (it records the
/// wall clock and the worker count).
fn data_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "manifest.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

fn determinism() -> Verdict {
    let runs: [&[&str]; 8] = [
        &["sample", "--lambda", "1", "--s", "10", "--replicates", "5", "--dump-edges"],
        &["giant", "--lambda", "0.5,2", "--s", "16,32", "--replicates", "40"],
        &["theta", "--lambda", "1,2", "--replicates", "400", "--trace"],
        &["lambda-c", "--s", "16,32", "--replicates", "40"],
        &["events", "--lambda", "2", "--replicates", "40"],
        &["block-field", "--lambda", "2", "--replicates", "2"],
        &["mecke", "--lambda", "1", "--s", "16", "--replicates", "200"],
        &["fkg", "--lambda", "2", "--s", "16", "--replicates", "200"],
    ];
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut files = 0;
    let mut differing = Vec::new();
    for args in runs {
        let dir = tmp.path().join(args[0]);
        for workers in [1, 4] {
            run_cli(&dir, args, workers)?;
        }
        let (a, b) = (data_files(&dir.join("w1")), data_files(&dir.join("w4")));
        files += a.len();
        if a != b {
            differing.push(args[0]);
        }
    }
    check(
        differing.is_empty(),
        format!("{files} files across 8 commands; differing: {differing:?}"),
    )
}

fn main() {
    let started = Instant::now();
    let mut failures = 0;
    let mut report = |id: usize, name: &str, verdict: Verdict, seconds: f64| {
        let (tag, detail) = match verdict {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failures += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} [{id:2}] {name}: {detail} ({seconds:.1}s)");
    };
    let timed = |f: &dyn Fn() -> Verdict| {
        let t = Instant::now();
        let v = f();
        (v, t.elapsed().as_secs_f64())
    };

    let t = Instant::now();
    let run = supercritical();
    let shared = t.elapsed().as_secs_f64();
    report(1, "supercritical giant law", giant_law(&run), shared);
    report(2, "second component vanishes", second_component(&run), 0.0);

    let criteria: [(usize, &str, fn() -> Verdict); 11] = [
        (3, "subcritical law", subcritical_law),
        (4, "first-order Mecke identity", first_mecke),
        (5, "second-order Mecke and factorization", second_mecke),
        (6, "eager and lazy exploration coupling", eager_lazy_coupling),
        (7, "component oracle", component_oracle),
        (8, "cell-list completeness", cell_list_completeness),
        (9, "degree calibration", degree_calibration),
        (10, "critical intensity bracketing", lambda_c_bracketing),
        (11, "renormalization events", renormalization_events),
        (12, "monotonicity suite", monotonicity),
        (13, "CLI determinism across worker counts", determinism),
    ];
    for (id, name, f) in criteria {
        let (v, secs) = timed(&f);
        report(id, name, v, secs);
    }
    println!(
        "acceptance: {} of 13 criteria passed in {:.0}s",
        13 - failures,
        started.elapsed().as_secs_f64()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
