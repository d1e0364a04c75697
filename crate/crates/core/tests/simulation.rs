//! Reduced-scale simulation properties: across the no-controls parameter
//! rows, estimated power must be monotone in the long-sample difference
//! approximation up to Monte Carlo noise.

use cqchange::{
    approx_difference, estimate_power, BootstrapConfig, DgpSpec, DifferenceAveraging,
};

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut da = 0.0;
    let mut db = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        num += (x - ma) * (y - mb);
        da += (x - ma) * (x - ma);
        db += (y - mb) * (y - mb);
    }
    num / (da.sqrt() * db.sqrt())
}

#[test]
fn power_is_monotone_in_the_population_difference() {
    let rows: [( (f64, f64), (f64, f64) ); 12] = [
        ((0.5, -0.4), (0.5, -0.1)),
        ((0.5, -0.4), (0.5, 0.0)),
        ((0.5, -0.4), (0.5, 0.1)),
        ((0.5, -0.4), (0.5, 0.4)),
        ((0.5, -0.1), (0.5, 0.0)),
        ((0.5, -0.1), (0.5, 0.1)),
        ((0.5, -0.1), (0.5, 0.4)),
        ((0.5, 0.0), (0.5, 0.1)),
        ((0.5, 0.0), (0.5, 0.4)),
        ((0.5, 0.1), (0.5, 0.4)),
        ((-0.5, 0.4), (0.2, 0.4)),
        ((-0.5, 0.4), (-0.5, 0.4)),
    ];
    let grid = cqchange::config::parse_tau_grid("0.05:0.95:0.05").unwrap();
    let trials = 40;
    let mut powers = Vec::with_capacity(rows.len());
    let mut diffs = Vec::with_capacity(rows.len());
    for (idx, &((a0b, a1b), (a0a, a1a))) in rows.iter().enumerate() {
        let spec_b = DgpSpec::p1(a0b, a1b, 500);
        let spec_a = DgpSpec::p1(a0a, a1a, 500);
        let cfg = BootstrapConfig::new(100, 0x500 + idx as u64);
        let est = estimate_power(&spec_b, &spec_a, trials, &grid, 5, &cfg, 0.05).unwrap();
        powers.push(est.power);
        let diff = approx_difference(
            &spec_b,
            &spec_a,
            30_000,
            4,
            &grid,
            5,
            0x600 + idx as u64,
            DifferenceAveraging::TablesFirst,
        )
        .unwrap();
        diffs.push(diff);
    }
    let rho = spearman(&powers, &diffs);
    assert!(
        rho > 0.9,
        "rank correlation {rho:.3} between powers {powers:?} and differences {diffs:?}"
    );
}
