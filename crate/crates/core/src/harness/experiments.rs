use std::fmt::Write as _;
use std::io::Write as _;

use serde::{Deserialize, Serialize};

use super::output::{Check, Outcome, Outputs, Status};
use crate::green::{
    determinant, row_sum_sequence, tail_sums_by_distance, volume_matrix, GreenSolver, RowSumSpec, Verdict,
    VerdictRule,
};
use crate::pinning::{free_energy, gamma_scan, FreeEnergyOptions};
use crate::randomwalk::{
    expected_killed_survival, feynman_kac_mass, mean_survival_time, single_source_mass, survival_tail,
    AnnealedTraps, Potential, SurvivalModel,
};
use crate::rng::{par_map, task_seed};
use crate::sandpile::{
    assemble_toppling_matrix, avalanche_statistics, avalanches_at, enumerate_recurrent, mean_odometer,
    sample_stationary, write_avalanche_csv, write_heights_jsonl, Mode, StationarySample, ToppleParams,
    TopplingMatrix, DEFAULT_BUDGET, DEFAULT_ENUMERATION_CAP,
};
use crate::stats::{log_linear_fit, mean_stderr, MeanEstimate};
use crate::topology::{
    build_box, build_qary_tree, build_site_classes, prune_to_galton_watson, sample_trap_field, BoxLattice,
    ClassPattern, SiteClassMap, SiteGraph, TrapProbability,
};
use crate::{Error, Result};

/// The experiment a config runs, selected by `id`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "kebab-case")]
pub enum Experiment {
    /// One-site volume; every identity holds trivially.
    Trivial(TrivialParams),
    E1(SurvivalTailParams),
    E2(DharParams),
    E3(RecurrentCountParams),
    E4(VerdictParams),
    E5(TreeAvalancheParams),
    E6(WalkGreenParams),
    E7(PinningParams),
    /// Row-sum sequence for an arbitrary pattern.
    GreenRows(RowSumSpec),
    /// Free energy on an arbitrary `m` grid.
    FreeEnergy(FreeEnergyParams),
}

/// A finite volume with its toppling matrix, for export.
pub(crate) struct Volume {
    pub name: String,
    pub graph: Box<dyn SiteGraph + Send>,
    pub matrix: TopplingMatrix,
}

fn field(name: &str, message: impl Into<String>) -> Error {
    Error::config(format!("experiment.{name}"), message)
}

fn require(ok: bool, name: &str, message: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(field(name, message))
    }
}

fn increasing<T: PartialOrd>(xs: &[T]) -> bool {
    !xs.is_empty() && xs.windows(2).all(|w| w[0] < w[1])
}

fn boundary_only(lattice: &BoxLattice) -> Result<TopplingMatrix> {
    let classes = build_site_classes(lattice, &ClassPattern::Empty)?;
    assemble_toppling_matrix(lattice, &classes, ToppleParams::default(), Mode::IntegerSandpile)
}

fn sides_name(sides: &[usize]) -> String {
    sides.iter().map(|s| s.to_string()).collect::<Vec<_>>().join("x")
}

/// Deserializes the body of an `[experiment]` table as the parameters of
/// `id` and returns the path and message of the first error. The tagged enum
/// buffers its content, so errors from it only name `experiment`.
pub(crate) fn locate_error(id: &str, body: toml::Value) -> Option<(String, String)> {
    fn probe<T: serde::de::DeserializeOwned>(body: toml::Value) -> Option<(String, String)> {
        serde_path_to_error::deserialize::<_, T>(body)
            .err()
            .map(|e| (e.path().to_string(), e.into_inner().message().to_string()))
    }
    match id {
        "trivial" => probe::<TrivialParams>(body),
        "e1" => probe::<SurvivalTailParams>(body),
        "e2" => probe::<DharParams>(body),
        "e3" => probe::<RecurrentCountParams>(body),
        "e4" => probe::<VerdictParams>(body),
        "e5" => probe::<TreeAvalancheParams>(body),
        "e6" => probe::<WalkGreenParams>(body),
        "e7" => probe::<PinningParams>(body),
        "green-rows" => probe::<RowSumSpec>(body),
        "free-energy" => probe::<FreeEnergyParams>(body),
        _ => None,
    }
}

impl Experiment {
    pub fn id(&self) -> &'static str {
        match self {
            Experiment::Trivial(_) => "trivial",
            Experiment::E1(_) => "e1",
            Experiment::E2(_) => "e2",
            Experiment::E3(_) => "e3",
            Experiment::E4(_) => "e4",
            Experiment::E5(_) => "e5",
            Experiment::E6(_) => "e6",
            Experiment::E7(_) => "e7",
            Experiment::GreenRows(_) => "green-rows",
            Experiment::FreeEnergy(_) => "free-energy",
        }
    }

    /// The config of a catalog experiment with every parameter at its default.
    pub fn default_for(id: &str) -> Result<Self> {
        Ok(match id.to_ascii_lowercase().as_str() {
            "trivial" => Experiment::Trivial(TrivialParams::default()),
            "e1" => Experiment::E1(SurvivalTailParams::default()),
            "e2" => Experiment::E2(DharParams::default()),
            "e3" => Experiment::E3(RecurrentCountParams::default()),
            "e4" => Experiment::E4(VerdictParams::default()),
            "e5" => Experiment::E5(TreeAvalancheParams::default()),
            "e6" => Experiment::E6(WalkGreenParams::default()),
            "e7" => Experiment::E7(PinningParams::default()),
            _ => return Err(Error::UnknownExperiment(id.to_string())),
        })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Experiment::Trivial(p) => require(p.d >= 1, "d", "dimension must be at least 1"),
            Experiment::E1(p) => p.validate(),
            Experiment::E2(p) => p.validate(),
            Experiment::E3(p) => p.validate(),
            Experiment::E4(p) => p.validate(),
            Experiment::E5(p) => p.validate(),
            Experiment::E6(p) => p.validate(),
            Experiment::E7(p) => p.validate(),
            Experiment::GreenRows(spec) => {
                spec.pattern
                    .compile(spec.d)
                    .map_err(|e| field("pattern", e.to_string()))?;
                require(increasing(&spec.volumes), "volumes", "must be non-empty and strictly increasing")?;
                require(spec.x.len() == spec.d, "x", "probe needs one coordinate per dimension")?;
                require(
                    spec.x.iter().all(|c| c.unsigned_abs() as usize <= spec.volumes[0]),
                    "x",
                    "probe must lie inside the smallest volume",
                )
            }
            Experiment::FreeEnergy(p) => p.validate(),
        }
    }

    pub(crate) fn execute(&self, seed: u64, out: &mut Outputs) -> Result<Outcome> {
        match self {
            Experiment::Trivial(p) => trivial(p, out),
            Experiment::E1(p) => e1(p, seed, out),
            Experiment::E2(p) => e2(p, seed, out),
            Experiment::E3(p) => e3(p, out),
            Experiment::E4(p) => e4(p, out),
            Experiment::E5(p) => e5(p, seed, out),
            Experiment::E6(p) => e6(p, seed, out),
            Experiment::E7(p) => e7(p, seed, out),
            Experiment::GreenRows(spec) => green_rows(spec, out),
            Experiment::FreeEnergy(p) => free_energy_run(p, seed, out),
        }
    }

    pub(crate) fn volumes(&self, seed: u64) -> Result<Vec<Volume>> {
        let boxed = |name: String, lattice: BoxLattice| -> Result<Volume> {
            let matrix = boundary_only(&lattice)?;
            Ok(Volume {
                name,
                graph: Box::new(lattice),
                matrix,
            })
        };
        match self {
            Experiment::Trivial(p) => Ok(vec![boxed("site".into(), build_box(p.d, 0)?)?]),
            Experiment::E2(p) => p
                .volumes
                .iter()
                .map(|v| boxed(sides_name(&v.sides), BoxLattice::rectangle(&v.sides)?))
                .collect(),
            Experiment::E3(p) => {
                let mut sides: Vec<Vec<usize>> = p.path_lengths.iter().map(|&k| vec![k]).collect();
                sides.extend(p.rectangles.iter().cloned());
                sides
                    .iter()
                    .map(|s| boxed(sides_name(s), BoxLattice::rectangle(s)?))
                    .collect()
            }
            Experiment::E5(p) => {
                let (_, tree) = p.largest_tree(seed)?;
                let matrix = tree_matrix(&tree)?;
                Ok(vec![Volume {
                    name: "tree".into(),
                    graph: Box::new(tree),
                    matrix,
                }])
            }
            Experiment::GreenRows(spec) => spec
                .volumes
                .iter()
                .map(|&n| {
                    let (lattice, matrix) = volume_matrix(spec.d, n, &spec.pattern, spec.params, spec.mode)?;
                    Ok(Volume {
                        name: format!("n{n}"),
                        graph: Box::new(lattice),
                        matrix,
                    })
                })
                .collect(),
            _ => Ok(Vec::new()),
        }
    }
}

// ---------------------------------------------------------------- trivial

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrivialParams {
    pub d: usize,
}

impl Default for TrivialParams {
    fn default() -> Self {
        TrivialParams { d: 1 }
    }
}

fn trivial(p: &TrivialParams, out: &mut Outputs) -> Result<Outcome> {
    let lattice = build_box(p.d, 0)?;
    let matrix = boundary_only(&lattice)?;
    let threshold = matrix.diag(0);
    let recurrent = enumerate_recurrent(&matrix, DEFAULT_ENUMERATION_CAP)?.len();
    let det = determinant(&matrix)?;
    let g = GreenSolver::new(&matrix)?.green_row(0)?[0];
    let mut w = out.create("matrix.txt")?;
    matrix.write_coordinate(&mut w)?;
    w.flush()?;
    let mut w = out.create("edges.txt")?;
    crate::topology::write_edge_list(&lattice, &mut w)?;
    w.flush()?;
    out.estimates(
        "green.csv",
        &[(
            0.0,
            MeanEstimate {
                mean: g,
                stderr: 0.0,
                n: 1,
            },
        )],
    )?;
    let checks = vec![
        Check::new(
            "recurrent-count",
            Status::from_bool(det.exact == Some(recurrent as i128)),
            format!("{recurrent} recurrent configurations, det = {:?}", det.exact),
        ),
        Check::new(
            "green-inverse",
            Status::from_bool((g * threshold - 1.0).abs() < 1e-12),
            format!("G(0,0) = {g}, 1/Δ(0,0) = {}", 1.0 / threshold),
        ),
    ];
    Ok(Outcome {
        checks,
        notes: Vec::new(),
    })
}

// --------------------------------------------------------------------- e1

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurvivalTailParams {
    pub q: usize,
    pub trap_prob: f64,
    pub n_walks: usize,
    pub n_min: u64,
    pub n_max: u64,
    pub eps: f64,
    /// Horizon of the mean survival time; it is compared with twice this.
    pub mean_horizon: u64,
}

impl Default for SurvivalTailParams {
    fn default() -> Self {
        SurvivalTailParams {
            q: 2,
            trap_prob: 0.3,
            n_walks: 100_000,
            n_min: 5,
            n_max: 40,
            eps: 0.2,
            mean_horizon: 80,
        }
    }
}

impl SurvivalTailParams {
    fn validate(&self) -> Result<()> {
        require(self.q >= 2, "q", "need q >= 2")?;
        require(self.trap_prob > 0.0 && self.trap_prob < 1.0, "trap_prob", "must lie in (0, 1)")?;
        require(self.n_walks >= 2, "n_walks", "need at least two walks")?;
        require(self.n_min >= 1 && self.n_min + 2 <= self.n_max, "n_max", "grid needs at least three points")?;
        let eps_max = (self.q as f64 - 1.0) / (self.q as f64 + 1.0);
        require(self.eps > 0.0 && self.eps < eps_max, "eps", "must lie in (0, (q-1)/(q+1))")?;
        require(self.mean_horizon >= 1, "mean_horizon", "must be positive")
    }
}

fn e1(p: &SurvivalTailParams, seed: u64, out: &mut Outputs) -> Result<Outcome> {
    let model = SurvivalModel::Annealed(AnnealedTraps::perfect(p.q, p.trap_prob));
    let grid: Vec<u64> = (p.n_min..=p.n_max).collect();
    let tail = survival_tail(&model, &grid, p.n_walks, Some(p.eps), task_seed(seed, "e1/tail"))?;
    let points: Vec<(f64, MeanEstimate)> = grid.iter().map(|&n| n as f64).zip(tail.survival.iter().copied()).collect();
    out.estimates("tail.csv", &points)?;
    let mut checks = Vec::new();
    checks.push(match tail.fit {
        Some(fit) => Check::new(
            "tail-slope",
            Status::from_bool(fit.slope < 0.0 && fit.significant(3.0)),
            format!("log-tail slope {:.5} ± {:.5}", fit.slope, fit.slope_stderr),
        ),
        None => Check::new("tail-slope", Status::Inconclusive, "too few positive tail points to fit"),
    });
    checks.push(match tail.below_bound(3.0) {
        Some(ok) => {
            let worst = tail
                .survival
                .iter()
                .zip(tail.bound.as_deref().unwrap_or(&[]))
                .map(|(e, b)| (e.mean - b) / e.stderr.max(f64::MIN_POSITIVE))
                .fold(f64::NEG_INFINITY, f64::max);
            Check::new(
                "tail-below-bound",
                Status::from_bool(ok),
                format!("largest (estimate - bound)/σ = {worst:.2}"),
            )
        }
        None => Check::new("tail-below-bound", Status::Inconclusive, "no analytic bound for this law"),
    });
    let seed_mean = task_seed(seed, "e1/mean");
    let short = mean_survival_time(&model, p.mean_horizon, p.n_walks, seed_mean)?;
    let long = mean_survival_time(&model, 2 * p.mean_horizon, p.n_walks, seed_mean)?;
    checks.push(Check::new(
        "mean-survival-doubling",
        Status::from_bool(short.estimate.agrees_with(&long.estimate, 3.0)),
        format!(
            "E(T ∧ {}) = {:.4} ± {:.4}, E(T ∧ {}) = {:.4} ± {:.4}",
            short.horizon, short.estimate.mean, short.estimate.stderr, long.horizon, long.estimate.mean, long.estimate.stderr
        ),
    ));
    out.json(
        "survival.json",
        &serde_json::json!({ "fit": tail.fit, "bound": tail.bound, "mean": [short, long] }),
    )?;
    Ok(Outcome {
        checks,
        notes: Vec::new(),
    })
}

// --------------------------------------------------------------------- e2

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DharVolume {
    /// Side lengths of the rectangle; boundary dissipation only.
    pub sides: Vec<usize>,
    /// Probed `(x, y)` site pairs. Defaults to all pairs `x <= y` on volumes of
    /// at most five sites, otherwise the centre against itself, its two
    /// index-neighbours and the two ends.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<Vec<[usize; 2]>>,
}

impl DharVolume {
    fn pairs(&self, n: usize) -> Vec<[usize; 2]> {
        if let Some(p) = &self.pairs {
            return p.clone();
        }
        if n <= 5 {
            return (0..n).flat_map(|x| (x..n).map(move |y| [x, y])).collect();
        }
        let c = n / 2;
        let mut ys = vec![c, c + 1, c - 1, 0, n - 1];
        ys.dedup();
        ys.into_iter().map(|y| [c, y]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DharParams {
    pub volumes: Vec<DharVolume>,
    pub burn_in: u64,
    pub n_samples: usize,
    pub thinning: usize,
    pub batches: usize,
    /// States written to `heights.jsonl` and `avalanches.csv` per volume.
    pub recorded_states: usize,
}

impl Default for DharParams {
    fn default() -> Self {
        DharParams {
            volumes: vec![
                DharVolume {
                    sides: vec![5],
                    pairs: None,
                },
                DharVolume {
                    sides: vec![5, 5],
                    pairs: None,
                },
            ],
            burn_in: 10_000,
            n_samples: 100_000,
            thinning: 1,
            batches: 50,
            recorded_states: 100,
        }
    }
}

impl DharParams {
    fn validate(&self) -> Result<()> {
        require(!self.volumes.is_empty(), "volumes", "need at least one volume")?;
        for (i, v) in self.volumes.iter().enumerate() {
            let n: usize = v.sides.iter().product();
            require(
                !v.sides.is_empty() && n > 0,
                &format!("volumes[{i}].sides"),
                "need positive side lengths",
            )?;
            if let Some(pairs) = &v.pairs {
                require(
                    !pairs.is_empty() && pairs.iter().flatten().all(|&s| s < n),
                    &format!("volumes[{i}].pairs"),
                    "pairs must be non-empty and inside the volume",
                )?;
            }
        }
        require(self.thinning >= 1, "thinning", "must be at least 1")?;
        require(self.batches >= 2, "batches", "need at least two batches")?;
        require(self.n_samples >= self.batches, "n_samples", "must fill every batch")
    }
}

fn e2(p: &DharParams, seed: u64, out: &mut Outputs) -> Result<Outcome> {
    let mut checks = Vec::new();
    let mut notes = vec![format!(
        "{:<8} {:>3} {:>3} {:>12} {:>12} {:>10} {:>7}",
        "volume", "x", "y", "exact", "mc", "stderr", "z"
    )];
    let mut rows = csv::Writer::from_writer(out.create("dhar.csv")?);
    rows.write_record(["volume", "x", "y", "exact", "mc", "stderr"])?;
    let mut recorded: Vec<StationarySample> = Vec::new();
    for v in &p.volumes {
        let name = sides_name(&v.sides);
        let lattice = BoxLattice::rectangle(&v.sides)?;
        let matrix = boundary_only(&lattice)?;
        let pairs = v.pairs(matrix.len());
        let mut probes: Vec<usize> = pairs.iter().map(|pair| pair[0]).collect();
        probes.sort_unstable();
        probes.dedup();
        let chain_seed = task_seed(seed, &format!("e2/{name}"));
        let means = mean_odometer(&matrix, &probes, p.burn_in, p.n_samples, p.thinning, p.batches, chain_seed)?;
        let solver = GreenSolver::new(&matrix)?;
        let mut worst: f64 = 0.0;
        let mut ok = true;
        for &[x, y] in &pairs {
            let exact = solver.green_row(x)?[y];
            let mc = means[probes.binary_search(&x).expect("probe listed")].means[y];
            let z = (mc.mean - exact) / mc.stderr.max(f64::MIN_POSITIVE);
            if (mc.mean - exact).abs() > 3.0 * mc.stderr {
                ok = false;
            }
            worst = worst.max(z.abs());
            rows.write_record([
                name.clone(),
                x.to_string(),
                y.to_string(),
                exact.to_string(),
                mc.mean.to_string(),
                mc.stderr.to_string(),
            ])?;
            notes.push(format!(
                "{name:<8} {x:>3} {y:>3} {exact:>12.6} {:>12.6} {:>10.6} {z:>7.2}",
                mc.mean, mc.stderr
            ));
        }
        checks.push(Check::new(
            format!("dhar-{name}"),
            Status::from_bool(ok),
            format!("{} pairs, largest |z| = {worst:.2}", pairs.len()),
        ));
        if p.recorded_states > 0 {
            let stream = sample_stationary(
                &matrix,
                p.burn_in,
                p.recorded_states,
                p.thinning,
                task_seed(seed, &format!("e2/{name}/record")),
                DEFAULT_BUDGET,
            )?;
            for s in stream {
                recorded.push(s?);
            }
        }
    }
    rows.flush()?;
    drop(rows);
    if p.recorded_states > 0 {
        let mut w = out.create("heights.jsonl")?;
        write_heights_jsonl(&recorded, &mut w)?;
        w.flush()?;
        write_avalanche_csv(&recorded, out.create("avalanches.csv")?)?;
    }
    Ok(Outcome { checks, notes })
}

// --------------------------------------------------------------------- e3

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecurrentCountParams {
    pub path_lengths: Vec<usize>,
    pub rectangles: Vec<Vec<usize>>,
}

impl Default for RecurrentCountParams {
    fn default() -> Self {
        RecurrentCountParams {
            path_lengths: (2..=8).collect(),
            rectangles: vec![vec![2, 2], vec![2, 3], vec![3, 3]],
        }
    }
}

impl RecurrentCountParams {
    fn validate(&self) -> Result<()> {
        require(
            !self.path_lengths.is_empty() || !self.rectangles.is_empty(),
            "path_lengths",
            "need at least one volume",
        )?;
        require(self.path_lengths.iter().all(|&k| k >= 1), "path_lengths", "lengths must be positive")?;
        for (i, r) in self.rectangles.iter().enumerate() {
            require(
                !r.is_empty() && r.iter().all(|&s| s >= 1),
                &format!("rectangles[{i}]"),
                "need positive side lengths",
            )?;
        }
        Ok(())
    }
}

fn e3(p: &RecurrentCountParams, out: &mut Outputs) -> Result<Outcome> {
    let mut sides: Vec<Vec<usize>> = p.path_lengths.iter().map(|&k| vec![k]).collect();
    sides.extend(p.rectangles.iter().cloned());
    let counts = par_map(sides.len(), |i| -> Result<(usize, Option<i128>)> {
        let matrix = boundary_only(&BoxLattice::rectangle(&sides[i])?)?;
        let recurrent = enumerate_recurrent(&matrix, DEFAULT_ENUMERATION_CAP)?.len();
        Ok((recurrent, determinant(&matrix)?.exact))
    });
    let mut rows = csv::Writer::from_writer(out.create("counts.csv")?);
    rows.write_record(["volume", "recurrent", "determinant"])?;
    let mut checks = Vec::new();
    for (s, c) in sides.iter().zip(counts) {
        let (recurrent, det) = c?;
        let name = sides_name(s);
        let det_text = det.map_or("unavailable".to_string(), |d| d.to_string());
        rows.write_record([name.clone(), recurrent.to_string(), det_text.clone()])?;
        let status = match det {
            Some(d) => Status::from_bool(d == recurrent as i128),
            None => Status::Inconclusive,
        };
        checks.push(Check::new(
            format!("count-{name}"),
            status,
            format!("{recurrent} recurrent, det = {det_text}"),
        ));
    }
    rows.flush()?;
    Ok(Outcome {
        checks,
        notes: Vec::new(),
    })
}

// --------------------------------------------------------------------- e4

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerdictParams {
    pub volumes: Vec<usize>,
    pub alpha: f64,
    pub rule: VerdictRule,
    /// Interior band `[lo, hi]` for the all-dissipative row sums at the last volume.
    pub interior_band: [f64; 2],
}

impl Default for VerdictParams {
    fn default() -> Self {
        VerdictParams {
            volumes: vec![4, 8, 16, 32],
            alpha: 1.0,
            rule: VerdictRule::default(),
            interior_band: [0.9, 1.0],
        }
    }
}

impl VerdictParams {
    fn validate(&self) -> Result<()> {
        require(increasing(&self.volumes), "volumes", "must be non-empty and strictly increasing")?;
        require(self.volumes[0] >= 1, "volumes", "the probe (0,1) must fit in every volume")?;
        require(self.alpha > 0.0, "alpha", "must be positive")?;
        require(
            self.interior_band[0] <= self.interior_band[1],
            "interior_band",
            "lower end exceeds upper end",
        )
    }
}

fn e4(p: &VerdictParams, out: &mut Outputs) -> Result<Outcome> {
    let params = ToppleParams {
        alpha: p.alpha,
        ..ToppleParams::default()
    };
    let cases: Vec<(&str, usize, ClassPattern, Vec<i64>, Verdict)> = vec![
        ("all-d2", 2, ClassPattern::All, vec![0, 0], Verdict::BoundedEvidence),
        ("even-d1", 1, ClassPattern::Sublattice { period: vec![2] }, vec![0], Verdict::BoundedEvidence),
        (
            "even-d2",
            2,
            ClassPattern::Sublattice { period: vec![2, 2] },
            vec![0, 0],
            Verdict::BoundedEvidence,
        ),
        ("empty-d2", 2, ClassPattern::Empty, vec![0, 0], Verdict::GrowingEvidence),
        ("axis-d2", 2, ClassPattern::Axis { axis: 0 }, vec![0, 1], Verdict::GrowingEvidence),
    ];
    let mut checks = Vec::new();
    let mut verdicts = Vec::new();
    let mut notes = Vec::new();
    for (name, d, pattern, x, expected) in cases {
        let spec = RowSumSpec {
            d,
            pattern: pattern.clone(),
            x,
            volumes: p.volumes.clone(),
            params,
            mode: Mode::IntegerSandpile,
            rule: p.rule,
        };
        let report = row_sum_sequence(&spec)?;
        report.write_csv(out.create(&format!("green_{name}.csv"))?)?;
        let status = if report.verdict == expected {
            Status::Pass
        } else if report.verdict == Verdict::Inconclusive {
            Status::Inconclusive
        } else {
            Status::Fail
        };
        let sums: Vec<String> = report.row_sums.iter().map(|s| format!("{s:.4}")).collect();
        checks.push(Check::new(
            format!("verdict-{name}"),
            status,
            format!("{:?} (expected {expected:?}); row sums {}", report.verdict, sums.join(", ")),
        ));
        notes.push(format!("{name}: increments {:?}", report.growth.increments));
        let mut v = report.verdict_json();
        v["case"] = serde_json::Value::from(name);
        verdicts.push(v);
    }
    let n = *p.volumes.last().expect("validated");
    let (lattice, matrix) = volume_matrix(2, n, &ClassPattern::All, params, Mode::IntegerSandpile)?;
    let sums = GreenSolver::new(&matrix)?.row_sums()?;
    let half = (n / 2) as i64;
    let (lo, hi) = sums
        .iter()
        .enumerate()
        .filter(|(i, _)| lattice.coords(*i).iter().all(|c| c.abs() <= half))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, &s)| (lo.min(s), hi.max(s)));
    let [band_lo, band_hi] = p.interior_band;
    checks.push(Check::new(
        "all-d2-interior",
        Status::from_bool(lo >= band_lo && hi <= band_hi + 1e-12),
        format!("row sums on |x| <= {half} lie in [{lo:.6}, {hi:.6}] at n = {n}"),
    ));
    out.json("verdicts.json", &verdicts)?;
    Ok(Outcome { checks, notes })
}

// --------------------------------------------------------------------- e5

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeAvalancheParams {
    pub trees: usize,
    pub q: usize,
    /// Probability `1 - p` that a child survives the pruning.
    pub survive_prob: f64,
    pub depth: usize,
    pub n_min: usize,
    pub n_max: usize,
    pub burn_in: u64,
    pub n_samples: usize,
    pub thinning: usize,
}

impl Default for TreeAvalancheParams {
    fn default() -> Self {
        TreeAvalancheParams {
            trees: 200,
            q: 2,
            survive_prob: 0.7,
            depth: 14,
            n_min: 2,
            n_max: 10,
            burn_in: 20_000,
            n_samples: 20_000,
            thinning: 1,
        }
    }
}

fn tree_matrix(tree: &crate::topology::RootedTree) -> Result<TopplingMatrix> {
    assemble_toppling_matrix(tree, &SiteClassMap::ordinary(tree), ToppleParams::default(), Mode::IntegerSandpile)
}

impl TreeAvalancheParams {
    fn validate(&self) -> Result<()> {
        require(self.trees >= 2, "trees", "need at least two trees")?;
        require(self.q >= 2, "q", "need q >= 2")?;
        require(
            self.survive_prob > 0.0 && self.survive_prob < 1.0,
            "survive_prob",
            "must lie in (0, 1)",
        )?;
        require(
            self.n_min + 2 <= self.n_max && self.n_max < self.depth,
            "n_max",
            "need at least three distances, all below the depth",
        )?;
        require(self.thinning >= 1, "thinning", "must be at least 1")?;
        require(self.n_samples >= 1, "n_samples", "must be positive")
    }

    fn pruned(&self, seed: u64, i: usize) -> Result<crate::topology::RootedTree> {
        let full = build_qary_tree(self.q, self.depth)?;
        let field = sample_trap_field(
            &full,
            &TrapProbability::Uniform(1.0 - self.survive_prob),
            1.0,
            task_seed(seed, &format!("e5/tree/{i}")),
        )?;
        prune_to_galton_watson(&full, &field)
    }

    /// The tree with the most vertices; ties go to the lowest index.
    fn largest_tree(&self, seed: u64) -> Result<(usize, crate::topology::RootedTree)> {
        let sizes = par_map(self.trees, |i| self.pruned(seed, i).map(|t| t.site_count()));
        let mut best = (0, 0);
        for (i, s) in sizes.into_iter().enumerate() {
            let s = s?;
            if s > best.1 {
                best = (i, s);
            }
        }
        Ok((best.0, self.pruned(seed, best.0)?))
    }
}

fn e5(p: &TreeAvalancheParams, seed: u64, out: &mut Outputs) -> Result<Outcome> {
    let tails = par_map(p.trees, |i| -> Result<Vec<f64>> {
        let tree = p.pruned(seed, i)?;
        let matrix = tree_matrix(&tree)?;
        let sums = tail_sums_by_distance(&matrix, tree.root())?;
        Ok((p.n_min..=p.n_max).map(|n| sums.get(n).copied().unwrap_or(0.0)).collect())
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let ns: Vec<f64> = (p.n_min..=p.n_max).map(|n| n as f64).collect();
    let averages: Vec<MeanEstimate> = (0..ns.len())
        .map(|k| mean_stderr(&tails.iter().map(|t| t[k]).collect::<Vec<_>>()))
        .collect();
    out.estimates(
        "green_tails.csv",
        &ns.iter().copied().zip(averages.iter().copied()).collect::<Vec<_>>(),
    )?;
    let means: Vec<f64> = averages.iter().map(|e| e.mean).collect();
    let mut checks = Vec::new();
    checks.push(match log_linear_fit(&ns, &means) {
        Some(fit) => Check::new(
            "green-tail-slope",
            Status::from_bool(fit.slope < 0.0 && fit.significant(3.0)),
            format!("averaged log tail slope {:.4} ± {:.4} over {} trees", fit.slope, fit.slope_stderr, p.trees),
        ),
        None => Check::new("green-tail-slope", Status::Inconclusive, "too few positive tail sums"),
    });
    let (index, tree) = p.largest_tree(seed)?;
    let matrix = tree_matrix(&tree)?;
    let records = avalanches_at(
        &matrix,
        tree.root(),
        p.burn_in,
        p.n_samples,
        p.thinning,
        task_seed(seed, "e5/avalanches"),
        DEFAULT_BUDGET,
    )?;
    let mut w = csv::Writer::from_writer(out.create("avalanches.csv")?);
    w.write_record(["seed", "step", "site", "size", "diameter"])?;
    for (k, r) in records.iter().enumerate() {
        let step = p.burn_in + ((k + 1) * p.thinning) as u64;
        w.write_record([
            seed.to_string(),
            step.to_string(),
            r.site.to_string(),
            r.size.to_string(),
            r.diameter.to_string(),
        ])?;
    }
    w.flush()?;
    drop(w);
    let stats = avalanche_statistics(&records, tree.site_count(), p.depth)?;
    out.estimates(
        "diameter_tail.csv",
        &stats
            .diameter_tail
            .iter()
            .map(|(n, e)| (*n as f64, *e))
            .collect::<Vec<_>>(),
    )?;
    checks.push(match stats.diameter_fit {
        Some(fit) => Check::new(
            "avalanche-diameter-slope",
            Status::from_bool(fit.slope < 0.0),
            format!(
                "root diameter tail slope {:.4} ± {:.4} on tree {index} ({} vertices)",
                fit.slope,
                fit.slope_stderr,
                tree.site_count()
            ),
        ),
        None => Check::new(
            "avalanche-diameter-slope",
            Status::Inconclusive,
            "too few positive diameter tail points",
        ),
    });
    Ok(Outcome {
        checks,
        notes: Vec::new(),
    })
}

// --------------------------------------------------------------------- e6

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkGreenParams {
    pub n_walks: usize,
    pub horizon: u64,
    /// Radius of the box whose exact row sum is compared.
    pub volume: usize,
}

impl Default for WalkGreenParams {
    fn default() -> Self {
        WalkGreenParams {
            n_walks: 100_000,
            horizon: 100_000,
            volume: 32,
        }
    }
}

impl WalkGreenParams {
    fn validate(&self) -> Result<()> {
        require(self.n_walks >= 2, "n_walks", "need at least two walks")?;
        require(self.horizon >= 1, "horizon", "must be positive")?;
        require(self.volume >= 1, "volume", "must be positive")
    }
}

fn e6(p: &WalkGreenParams, seed: u64, out: &mut Outputs) -> Result<Outcome> {
    let d = 1;
    let cases = [
        ("all", ClassPattern::All),
        ("even", ClassPattern::Sublattice { period: vec![2] }),
    ];
    let mut checks = Vec::new();
    let mut report = Vec::new();
    for (name, pattern) in cases {
        let (lattice, matrix) = volume_matrix(d, p.volume, &pattern, ToppleParams::default(), Mode::IntegerSandpile)?;
        let x = lattice.origin().expect("centred box");
        let row_sum = GreenSolver::new(&matrix)?.row_sums()?[x];
        let compiled = pattern.compile(d)?;
        let walk = expected_killed_survival(&compiled, &[0], p.horizon, p.n_walks, task_seed(seed, &format!("e6/{name}")))?;
        let e = walk.estimate;
        let scale = 1.0 / (2 * d) as f64;
        let bound = scale * (e.mean + 3.0 * e.stderr);
        checks.push(Check::new(
            format!("walk-bound-{name}"),
            Status::from_bool(row_sum <= bound),
            format!(
                "row sum {row_sum:.6} vs Ê(T̂)/2d = {:.6} (+3σ: {bound:.6}), censored {}",
                scale * e.mean,
                walk.censored
            ),
        ));
        if name == "all" {
            checks.push(Check::new(
                "killed-mean-all",
                Status::from_bool(e.agrees_with_value(3.0, 3.0)),
                format!("Ê(T̂) = {:.4} ± {:.4}, expected 3", e.mean, e.stderr),
            ));
        }
        report.push(serde_json::json!({
            "pattern": name,
            "volume": p.volume,
            "row_sum": row_sum,
            "killed_survival": walk,
        }));
    }
    out.json("walk_green.json", &report)?;
    Ok(Outcome {
        checks,
        notes: Vec::new(),
    })
}

// --------------------------------------------------------------------- e7

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PinningParams {
    pub d: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma_grid: Vec<f64>,
    /// Initial horizon; doubled per `m` until stable.
    pub t: f64,
    pub n_walks: usize,
    pub options: FreeEnergyOptions,
    /// Grid for the `F(0) = 0` and monotonicity checks; must contain 0.
    pub m_grid: Vec<f64>,
    /// `gamma` of the single-source mass comparison.
    pub mass_gamma: f64,
    pub mass_t: Vec<f64>,
    pub mass_walks: usize,
}

impl Default for PinningParams {
    fn default() -> Self {
        PinningParams {
            d: 1,
            alpha: 1.0,
            beta: 1.0,
            gamma_grid: vec![1.0, 2.0, 4.0, 8.0],
            t: 10.0,
            n_walks: 30_000,
            options: FreeEnergyOptions {
                max_doublings: 4,
                ..FreeEnergyOptions::default()
            },
            m_grid: vec![0.0, 0.5, 1.0, 1.5, 2.0, 3.0],
            mass_gamma: 1.0,
            mass_t: vec![0.5, 1.0, 2.0, 3.0, 4.0],
            mass_walks: 100_000,
        }
    }
}

impl PinningParams {
    fn validate(&self) -> Result<()> {
        require(self.d >= 1, "d", "dimension must be at least 1")?;
        require(self.alpha > 0.0 && self.beta >= 0.0, "alpha", "need alpha > 0 and beta >= 0")?;
        require(
            increasing(&self.gamma_grid) && self.gamma_grid[0] > 0.0,
            "gamma_grid",
            "must be positive and strictly increasing",
        )?;
        require(self.t > 0.0, "t", "must be positive")?;
        require(
            self.options.batches >= crate::pinning::MIN_BATCHES,
            "options.batches",
            "at least 30 batches are required",
        )?;
        require(self.n_walks >= 2 * self.options.batches, "n_walks", "too few walks for the batches")?;
        require(
            increasing(&self.m_grid) && self.m_grid[0] == 0.0,
            "m_grid",
            "must be increasing and start at 0",
        )?;
        require(self.mass_gamma > 0.0, "mass_gamma", "must be positive")?;
        require(
            increasing(&self.mass_t) && self.mass_t[0] > 0.0,
            "mass_t",
            "must be positive and increasing",
        )?;
        require(self.mass_walks >= 2, "mass_walks", "need at least two walks")
    }
}

fn e7(p: &PinningParams, seed: u64, out: &mut Outputs) -> Result<Outcome> {
    let mut checks = Vec::new();
    let mut notes = Vec::new();
    let scan = gamma_scan(
        p.d,
        p.alpha,
        p.beta,
        &p.gamma_grid,
        1,
        p.t,
        p.n_walks,
        task_seed(seed, "e7/scan"),
        &p.options,
    )?;
    scan.write_csv(out.create("gamma_scan.csv")?)?;
    let values: Vec<String> = scan
        .rows
        .iter()
        .map(|r| format!("γ={} {:.4}±{:.4} (t={})", r.gamma, r.value.mean, r.value.stderr, r.t))
        .collect();
    let status = if !scan.stable || scan.rows.iter().any(|r| !r.reliable) {
        Status::Inconclusive
    } else {
        Status::from_bool(scan.strictly_decreasing())
    };
    checks.push(Check::new("gamma-scan-decreasing", status, values.join(", ")));
    notes.push(format!("smallest gamma with γF < α: {:?}", scan.first_below_alpha));

    let fe = free_energy(p.d, &p.m_grid, p.t, p.n_walks, task_seed(seed, "e7/free"), &p.options)?;
    fe.write_csv(out.create("free_energy.csv")?)?;
    checks.push(Check::new(
        "free-energy-zero",
        Status::from_bool(fe.f_hat[0].mean == 0.0),
        format!("F̂(0) = {}", fe.f_hat[0].mean),
    ));
    let status = if fe.all_stable() {
        Status::from_bool(fe.monotone_within(3.0))
    } else {
        Status::Inconclusive
    };
    let values: Vec<String> = fe
        .m_grid
        .iter()
        .zip(&fe.f_hat)
        .map(|(m, f)| format!("{m}: {:.4}±{:.4}", f.mean, f.stderr))
        .collect();
    checks.push(Check::new("free-energy-monotone", status, values.join(", ")));

    let origin = vec![0i64; p.d];
    let potential = Potential {
        pattern: ClassPattern::FiniteSources {
            sources: vec![origin.clone()],
        }
        .compile(p.d)?,
        alpha: p.alpha,
        beta: p.beta,
    };
    let fk = feynman_kac_mass(
        &origin,
        &potential,
        p.mass_gamma,
        &p.mass_t,
        p.mass_walks,
        task_seed(seed, "e7/fk"),
    )?;
    let factorized = single_source_mass(
        p.d,
        p.alpha,
        p.beta,
        p.mass_gamma,
        &p.mass_t,
        p.mass_walks,
        task_seed(seed, "e7/factorized"),
    )?;
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for (a, b) in fk.mass.iter().zip(&factorized) {
        ok &= a.agrees_with(b, 3.0);
        worst = worst.max((a.mean - b.mean).abs() / a.stderr.hypot(b.stderr).max(f64::MIN_POSITIVE));
    }
    checks.push(Check::new(
        "factorized-mass",
        Status::from_bool(ok),
        format!("{} times, largest |z| = {worst:.2}", p.mass_t.len()),
    ));
    out.estimates(
        "mass_feynman_kac.csv",
        &p.mass_t.iter().copied().zip(fk.mass.iter().copied()).collect::<Vec<_>>(),
    )?;
    out.estimates(
        "mass_factorized.csv",
        &p.mass_t.iter().copied().zip(factorized.iter().copied()).collect::<Vec<_>>(),
    )?;
    Ok(Outcome { checks, notes })
}

// ----------------------------------------------------------------- custom

fn green_rows(spec: &RowSumSpec, out: &mut Outputs) -> Result<Outcome> {
    let report = row_sum_sequence(spec)?;
    report.write_csv(out.create("green.csv")?)?;
    out.json("verdict.json", &report.verdict_json())?;
    let status = match report.verdict {
        Verdict::Inconclusive => Status::Inconclusive,
        _ => Status::Pass,
    };
    Ok(Outcome {
        checks: vec![Check::new("verdict", status, format!("{:?}", report.verdict))],
        notes: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FreeEnergyParams {
    pub d: usize,
    pub m_grid: Vec<f64>,
    pub t: f64,
    pub n_walks: usize,
    pub options: FreeEnergyOptions,
}

impl Default for FreeEnergyParams {
    fn default() -> Self {
        FreeEnergyParams {
            d: 1,
            m_grid: vec![0.0, 0.5, 1.0, 2.0],
            t: 10.0,
            n_walks: 30_000,
            options: FreeEnergyOptions::default(),
        }
    }
}

impl FreeEnergyParams {
    fn validate(&self) -> Result<()> {
        require(self.d >= 1, "d", "dimension must be at least 1")?;
        require(
            !self.m_grid.is_empty() && self.m_grid.iter().all(|m| *m >= 0.0 && m.is_finite()),
            "m_grid",
            "need non-negative finite values",
        )?;
        require(self.t > 0.0, "t", "must be positive")?;
        require(
            self.options.batches >= crate::pinning::MIN_BATCHES,
            "options.batches",
            "at least 30 batches are required",
        )?;
        require(self.n_walks >= 2 * self.options.batches, "n_walks", "too few walks for the batches")
    }
}

fn free_energy_run(p: &FreeEnergyParams, seed: u64, out: &mut Outputs) -> Result<Outcome> {
    let fe = free_energy(p.d, &p.m_grid, p.t, p.n_walks, task_seed(seed, "free-energy"), &p.options)?;
    fe.write_csv(out.create("free_energy.csv")?)?;
    let mut detail = String::new();
    for ((m, f), t) in fe.m_grid.iter().zip(&fe.f_hat).zip(&fe.t) {
        let _ = write!(detail, "{m}: {:.5}±{:.5} (t={t}) ", f.mean, f.stderr);
    }
    let status = if fe.all_stable() {
        Status::Pass
    } else {
        Status::Inconclusive
    };
    Ok(Outcome {
        checks: vec![Check::new("doubling-stable", status, detail.trim_end().to_string())],
        notes: vec![format!("largest reliable m: {:?}", fe.largest_reliable_m)],
    })
}
