//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails or overruns its time budget.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use num_traits::{Signed, Zero};
use otdp::approx::ot_approx;
use otdp::brute_oracle::{enumerate_atoms, epsilon_bar, ot_closed_form, scaled_cvar_by_lp, EpsilonBar, Mode};
use otdp::dp_solver::{convolve_losses, loss_table, ot_exact, plan_cost_of_atom, plan_descriptor, plan_query, scaled_cvar};
use otdp::grid::{detect_spanned_grid, minkowski_grid, RegularGrid1D};
use otdp::knapsack_reduction::{
    count_dp, count_via_ot, parity_normalize, reduction_target, ExactDpOracle, KnapsackInstance, NoisyOracle,
    WassersteinOracle,
};
use otdp::model::{integer, rational};
use otdp::{Marginal, ProductDistribution, Rational, TwoPointTarget};
use rand::Rng;

use common::*;

const GRID_CAP: usize = 4_000_000;
const ATOM_CAP: usize = 1 << 20;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn exact_value(v: otdp::OtValue) -> Rational {
    v.value.as_exact().expect("exact value").clone()
}

fn two_atom_mu() -> ProductDistribution {
    ProductDistribution::new(vec![Marginal::uniform(vec![integer(0), integer(1)]).unwrap()]).unwrap()
}

fn fixture(name: &str) -> String {
    format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn cli_value(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_otdp"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || format!("otdp {args:?} exited with {}", out.status))?;
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
    doc["value_rational"]
        .as_str()
        .map(str::to_owned)
        .ok_or_else(|| format!("no value_rational in {doc}"))
}

fn c1_two_atom_example() -> Outcome {
    let target = TwoPointTarget::new(vec![integer(1)], vec![integer(2)], integer(0)).unwrap();
    let dp = exact_value(ot_exact(&two_atom_mu(), &target, GRID_CAP).unwrap());
    let brute2 = exact_value(ot_closed_form(&two_atom_mu(), &target, 2.0, Mode::Exact, ATOM_CAP).unwrap());
    let brute4 = exact_value(ot_closed_form(&two_atom_mu(), &target, 4.0, Mode::Exact, ATOM_CAP).unwrap());
    ensure(dp == rational(5, 2), || format!("dp gave {dp}"))?;
    ensure(brute2 == rational(5, 2), || format!("brute p=2 gave {brute2}"))?;
    ensure(brute4 == rational(17, 2), || format!("brute p=4 gave {brute4}"))?;

    let path = fixture("two_atom_t0.json");
    let exact = cli_value(&["exact", &path])?;
    let brute = cli_value(&["brute", &path])?;
    let brute4 = cli_value(&["brute", "--p", "4", &path])?;
    ensure(exact == "5/2" && brute == "5/2" && brute4 == "17/2", || {
        format!("cli gave exact {exact}, brute {brute}, brute p=4 {brute4}")
    })?;
    Ok("W = 5/2 (exact, brute), 17/2 at p = 4; library and CLI".into())
}

fn c2_epsilon_bar() -> Outcome {
    let eb = epsilon_bar(&two_atom_mu(), &[integer(1)], &[integer(2)], 2, ATOM_CAP).unwrap();
    ensure(eb == EpsilonBar::Finite(rational(1, 8)), || format!("got {eb:?}"))?;
    Ok("ε̄ = 1/8".into())
}

fn c3_oracle_equivalence() -> Outcome {
    let mut rng = rng(3);
    for case in 0..500 {
        let k = rng.gen_range(1..=6);
        let m = rng.gen_range(1..=8);
        let draw = |r: &mut _| lattice_value(r, m, 5);
        let mu = product(&mut rng, k, 3, 9, draw);
        let t = mixing_weight(&mut rng, 64);
        let target = target(&mut rng, k, t, draw);
        let dp = exact_value(ot_exact(&mu, &target, GRID_CAP).unwrap());
        let brute = exact_value(ot_closed_form(&mu, &target, 2.0, Mode::Exact, ATOM_CAP).unwrap());
        ensure(dp == brute, || format!("case {case}: dp {dp} != brute {brute}"))?;
    }
    Ok("500/500 instances agree exactly".into())
}

fn c4_convexity() -> Outcome {
    let mut rng = rng(4);
    let mut slopes_checked = 0usize;
    for case in 0..50 {
        let k = rng.gen_range(1..=8);
        let mu = ProductDistribution::uniform_binary(k);
        let base = target(&mut rng, k, integer(0), |r| lattice_value(r, 4, 3));
        let breakpoints = 1i64 << k;
        let values: Vec<Rational> = (0..=breakpoints)
            .map(|i| exact_value(ot_exact(&mu, &base.with_t(rational(i, breakpoints)), GRID_CAP).unwrap()))
            .collect();
        let slopes: Vec<Rational> = values.windows(2).map(|w| &w[1] - &w[0]).collect();
        let sorted = slopes.windows(2).all(|w| w[0] <= w[1]);
        ensure(sorted, || format!("case {case} (K = {k}): slopes not sorted: {slopes:?}"))?;
        slopes_checked += slopes.len();
    }
    Ok(format!("50 instances, {slopes_checked} slopes nondecreasing"))
}

fn c5_minkowski() -> Outcome {
    let mut rng = rng(5);
    for case in 0..200 {
        let count = rng.gen_range(1..=7usize);
        let grid = RegularGrid1D {
            origin: rational(rng.gen_range(-20..=20), rng.gen_range(1..=5)),
            spacing: if count == 1 {
                Rational::zero()
            } else {
                rational(rng.gen_range(1..=9), rng.gen_range(1..=7))
            },
            count,
        };
        let k = rng.gen_range(1..=6usize);
        let points: Vec<Rational> = grid.points().collect();
        let mut sums: BTreeSet<Rational> = points.iter().cloned().collect();
        for _ in 1..k {
            sums = sums.iter().flat_map(|s| points.iter().map(move |p| s + p)).collect();
        }
        let expected: BTreeSet<Rational> = minkowski_grid(&grid, k).points().collect();
        ensure(sums.len() == k * (count - 1) + 1, || {
            format!("case {case}: {} sums for k = {k}, N = {count}", sums.len())
        })?;
        ensure(sums == expected, || format!("case {case}: point sets differ"))?;
    }
    Ok("200 grids match k(N-1)+1 and minkowski_grid".into())
}

fn enumerate_count(inst: &KnapsackInstance) -> BigUint {
    let k = inst.weights.len();
    let n = (0u32..1 << k)
        .filter(|mask| {
            let total: u64 = (0..k).filter(|j| mask >> j & 1 == 1).map(|j| inst.weights[j]).sum();
            total <= inst.capacity
        })
        .count();
    BigUint::from(n)
}

fn random_knapsack(rng: &mut rand_chacha::ChaCha8Rng, max_k: usize, nonzero: bool) -> KnapsackInstance {
    loop {
        let k = rng.gen_range(1..=max_k);
        let weights: Vec<u64> = (0..k).map(|_| rng.gen_range(0..=15)).collect();
        let total: u64 = weights.iter().sum();
        if nonzero && total == 0 {
            continue;
        }
        let low = u64::from(nonzero);
        let capacity = rng.gen_range(low..=total.max(low) + 1);
        return KnapsackInstance::new(weights, capacity);
    }
}

fn c6_reduction() -> Outcome {
    let mut rng = rng(6);
    let mut max_calls_seen = 0;
    for case in 0..200 {
        let inst = random_knapsack(&mut rng, 10, false);
        let k = inst.weights.len();
        let out = count_via_ot(&inst, &mut ExactDpOracle { grid_cap: GRID_CAP }).unwrap();
        let dp = count_dp(&inst);
        ensure(out.count == dp && dp == enumerate_count(&inst), || {
            format!("case {case} {inst:?}: ot {} dp {dp}", out.count)
        })?;
        ensure(out.oracle_calls <= 2 * k + 2, || {
            format!("case {case}: {} oracle calls for K = {k}", out.oracle_calls)
        })?;
        max_calls_seen = max_calls_seen.max(out.oracle_calls as i64 - 2 * k as i64);
    }
    Ok(format!("200/200 counts exact; calls - 2K at most {max_calls_seen}"))
}

/// Adds `±magnitude` with a random sign to every answer.
struct RandomSignOracle {
    inner: ExactDpOracle,
    magnitude: Rational,
    rng: rand_chacha::ChaCha8Rng,
}

impl WassersteinOracle for RandomSignOracle {
    fn wasserstein(&mut self, mu: &ProductDistribution, target: &TwoPointTarget) -> otdp::Result<Rational> {
        let v = self.inner.wasserstein(mu, target)?;
        Ok(if self.rng.gen_bool(0.5) {
            v + &self.magnitude
        } else {
            v - &self.magnitude
        })
    }
}

fn c7_noise() -> Outcome {
    let mut rng = rng(7);
    for case in 0..50 {
        let inst = random_knapsack(&mut rng, 8, true);
        let reduction = reduction_target(&parity_normalize(&inst)).unwrap();
        let eb = epsilon_bar(&reduction.mu, &reduction.y1, &reduction.y2, 2, ATOM_CAP).unwrap();
        let half = eb.finite().ok_or_else(|| format!("case {case}: ε̄ infinite"))? / integer(2);
        let expected = count_dp(&inst);
        let exact = ExactDpOracle { grid_cap: GRID_CAP };
        for start_positive in [true, false] {
            let mut noisy = NoisyOracle::new(exact, half.clone(), start_positive);
            let got = count_via_ot(&inst, &mut noisy).unwrap().count;
            ensure(got == expected, || format!("case {case} {inst:?}: noisy count {got}, expected {expected}"))?;
        }
        let mut random = RandomSignOracle {
            inner: exact,
            magnitude: half.clone(),
            rng: common::rng(1000 + case),
        };
        let got = count_via_ot(&inst, &mut random).unwrap().count;
        ensure(got == expected, || format!("case {case}: random-sign count {got}, expected {expected}"))?;
    }
    Ok("50/50 counts exact under ±ε̄/2 offsets (alternating and random signs)".into())
}

fn c8_approximation() -> Outcome {
    let mut rng = rng(8);
    let epsilons = [rational(1, 2), rational(1, 10), rational(1, 100)];
    let mut worst = Rational::zero();
    for case in 0..200 {
        let k = rng.gen_range(1..=6);
        let draw_x = |r: &mut rand_chacha::ChaCha8Rng| {
            let q = r.gen_range(1..=7);
            rational(r.gen_range(-q..=q), q)
        };
        // probabilities and t with small denominators keep U, and so M, small
        let mu = product(&mut rng, k, 3, 2, draw_x);
        let t = mixing_weight(&mut rng, 7);
        let target = target(&mut rng, k, t, |r| lattice_value(r, 2, 1));
        let exact = exact_value(ot_exact(&mu, &target, GRID_CAP).unwrap());
        ensure(exact == primal_wasserstein(&mu, &target), || format!("case {case}: exact value disagrees with primal"))?;
        for eps in &epsilons {
            let (value, report) = ot_approx(&mu, &target, eps, GRID_CAP).map_err(|e| format!("case {case}: {e}"))?;
            let err = (exact_value(value) - &exact).abs();
            ensure(&err <= eps, || format!("case {case}: error {err} exceeds eps {eps} (M = {})", report.m))?;
            worst = worst.max(err / eps);
        }
    }
    Ok(format!("600/600 within eps; worst error/eps = {:.4}", otdp::model::rational_to_f64(&worst)))
}

fn shift_marginal(
    rng: &mut rand_chacha::ChaCha8Rng,
    m: &Marginal,
    eps: &Rational,
    u: &Rational,
) -> Marginal {
    let pairs: Vec<(Rational, Rational)> = m
        .iter()
        .map(|(x, p)| (shift(rng, x, eps, u), p.clone()))
        .collect();
    Marginal::merged(pairs).unwrap()
}

fn shift(rng: &mut rand_chacha::ChaCha8Rng, x: &Rational, eps: &Rational, u: &Rational) -> Rational {
    let moved = x + eps * rational(rng.gen_range(-6..=6), 6);
    moved.max(-u.clone()).min(u.clone())
}

fn c9_perturbation() -> Outcome {
    let mut rng = rng(9);
    let mut worst = Rational::zero();
    for case in 0..100 {
        let k = rng.gen_range(1..=4);
        let u_int = rng.gen_range(1..=3);
        let u = integer(u_int);
        let eps = rational(1, rng.gen_range(1..=50));
        let draw = |r: &mut rand_chacha::ChaCha8Rng| lattice_value(r, 4, u_int);
        let mu = product(&mut rng, k, 3, 9, draw);
        let t = mixing_weight(&mut rng, 64);
        let target = target(&mut rng, k, t, draw);

        let mu_shifted = ProductDistribution::new(
            mu.marginals.iter().map(|m| shift_marginal(&mut rng, m, &eps, &u)).collect(),
        )
        .unwrap();
        let shift_all = |r: &mut rand_chacha::ChaCha8Rng, ys: &[Rational]| -> Vec<Rational> {
            ys.iter().map(|y| shift(r, y, &eps, &u)).collect()
        };
        let y1 = shift_all(&mut rng, &target.y1);
        let y2 = shift_all(&mut rng, &target.y2);
        let target_shifted = TwoPointTarget::new(y1, y2, target.t.clone()).unwrap();

        let w = exact_value(ot_closed_form(&mu, &target, 2.0, Mode::Exact, ATOM_CAP).unwrap());
        let w_shifted = exact_value(ot_closed_form(&mu_shifted, &target_shifted, 2.0, Mode::Exact, ATOM_CAP).unwrap());
        ensure(w_shifted == primal_wasserstein(&mu_shifted, &target_shifted), || {
            format!("case {case}: shifted value disagrees with primal")
        })?;
        let bound = integer(8 * k as i64) * &u * &eps;
        let diff = (&w - &w_shifted).abs();
        ensure(diff <= bound, || format!("case {case}: |W - W~| = {diff} > 8KUε = {bound}"))?;
        worst = worst.max(diff / bound);
    }
    Ok(format!("100/100 pairs within 8KUε; worst ratio {:.4}", otdp::model::rational_to_f64(&worst)))
}

fn c10_plan() -> Outcome {
    let mut rng = rng(10);
    for case in 0..100 {
        let k = rng.gen_range(1..=5);
        let m = rng.gen_range(1..=6);
        let draw = |r: &mut _| lattice_value(r, m, 3);
        let mu = product(&mut rng, k, 3, 9, draw);
        let t = interior_weight(&mut rng, 64);
        let target = target(&mut rng, k, t, draw);
        let desc = plan_descriptor(&mu, &target, GRID_CAP).unwrap();
        let atoms = enumerate_atoms(&mu, ATOM_CAP).unwrap();
        ensure(atoms.atoms.len() <= 512, || "too many atoms".into())?;
        let mut to_y1 = Rational::zero();
        let mut cost = Rational::zero();
        for atom in &atoms.atoms {
            let (point, prob) = mu.atom(&atom.indices).unwrap();
            let masses = plan_query(&desc, &point, &prob, &target).unwrap();
            ensure(!masses.0.is_negative() && !masses.1.is_negative(), || {
                format!("case {case}: negative mass at {:?}", atom.indices)
            })?;
            ensure(&masses.0 + &masses.1 == prob, || format!("case {case}: row sum at {:?}", atom.indices))?;
            to_y1 += &masses.0;
            cost += plan_cost_of_atom(&point, &masses, &target);
        }
        ensure(to_y1 == target.t, || format!("case {case}: y1 receives {to_y1}, t = {}", target.t))?;
        let w = exact_value(ot_exact(&mu, &target, GRID_CAP).unwrap());
        ensure(cost == w, || format!("case {case}: plan cost {cost} != W {w}"))?;
        ensure(w == primal_wasserstein(&mu, &target), || format!("case {case}: W disagrees with primal"))?;
    }
    Ok("100/100 plans feasible with cost equal to W".into())
}

/// Worst-t-fraction expected loss, by filling mass t from the largest loss down.
fn tail_fill(mu: &ProductDistribution, target: &TwoPointTarget) -> Rational {
    let direction: Vec<Rational> = target.y1.iter().zip(&target.y2).map(|(a, b)| a - b).collect();
    let mut rows: Vec<(Rational, Rational)> = atoms(mu)
        .into_iter()
        .map(|(x, p)| (x.iter().zip(&direction).map(|(a, b)| a * b).sum(), p))
        .collect();
    rows.sort_by(|a, b| b.0.cmp(&a.0));
    let mut left = target.t.clone();
    let mut total = Rational::zero();
    for (loss, p) in rows {
        let take = if left > p { p } else { left.clone() };
        left -= &take;
        total += take * loss;
    }
    total
}

fn c11_cvar_lp() -> Outcome {
    let mut rng = rng(11);
    for case in 0..100 {
        let k = rng.gen_range(1..=5);
        let m = rng.gen_range(1..=8);
        let draw = |r: &mut _| lattice_value(r, m, 4);
        let mu = product(&mut rng, k, 3, 9, draw);
        let t = if case % 10 == 0 { integer(case as i64 / 10 % 2) } else { mixing_weight(&mut rng, 64) };
        let target = target(&mut rng, k, t, draw);
        let table = loss_table(&mu, &target);
        let values: Vec<Rational> = table.values().cloned().collect();
        let grid = detect_spanned_grid(&values, GRID_CAP).unwrap();
        let pmf = convolve_losses(&table, &grid, GRID_CAP).unwrap();
        let dp = scaled_cvar(&pmf, &target.t).unwrap();
        let lp = scaled_cvar_by_lp(&mu, &target, ATOM_CAP).unwrap();
        let independent = tail_fill(&mu, &target);
        ensure(dp == lp && lp == independent, || {
            format!("case {case}: dp {dp}, lp {lp}, tail fill {independent}")
        })?;
    }
    Ok("100/100 CVaR values equal the LP optimum".into())
}

fn main() {
    let criteria: [(u32, &str, u64, fn() -> Outcome); 11] = [
        (1, "two-atom example reproduction", 1, c1_two_atom_example),
        (2, "epsilon-bar reproduction", 1, c2_epsilon_bar),
        (3, "oracle equivalence", 60, c3_oracle_equivalence),
        (4, "convexity of W(t)", 120, c4_convexity),
        (5, "Minkowski cardinality", 10, c5_minkowski),
        (6, "reduction correctness and budget", 120, c6_reduction),
        (7, "noise robustness", 120, c7_noise),
        (8, "approximation guarantee", 120, c8_approximation),
        (9, "perturbation bound", 60, c9_perturbation),
        (10, "plan feasibility and optimality", 60, c10_plan),
        (11, "CVaR-LP equivalence", 60, c11_cvar_lp),
    ];
    // keep panics from interleaving with the report
    std::panic::set_hook(Box::new(|_| {}));

    let mut failures = 0;
    for (id, name, budget, run) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(_) if elapsed > Duration::from_secs(budget) => Err(format!("over the {budget} s budget")),
            other => other,
        };
        let (tag, detail) = match &outcome {
            Ok(detail) => ("PASS", detail.clone()),
            Err(detail) => {
                failures += 1;
                ("FAIL", detail.clone())
            }
        };
        println!("[{tag}] criterion {id:>2}: {name} ({:.2} s) {detail}", elapsed.as_secs_f64());
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 11 acceptance criteria passed");
}
