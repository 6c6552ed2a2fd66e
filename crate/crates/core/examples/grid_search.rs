//! Grid search over training hyperparameters for one experiment.
//!
//! ```text
//! cargo run --release -p pcsub-core --example grid_search -- relu_ts \
//!     gamma=0.02,0.05,0.1 alpha=0.005,0.01,0.05 infer_ticks=10,20,50
//! ```
//!
//! Every combination is trained and printed with its epoch 0, 1 and final MSE.

use pcsub_core::{run_experiment, Overrides};
use rayon::prelude::*;

fn main() {
    let mut args = std::env::args().skip(1);
    let name = args.next().expect("experiment name");
    let axes: Vec<(String, Vec<String>)> = args
        .map(|a| {
            let (k, v) = a.split_once('=').expect("key=v1,v2");
            (k.to_string(), v.split(',').map(str::to_string).collect())
        })
        .collect();

    let mut combos: Vec<Vec<String>> = vec![vec![]];
    for (key, values) in &axes {
        combos = combos
            .into_iter()
            .flat_map(|c| values.iter().map(move |v| [c.clone(), vec![format!("{key} = {v}")]].concat()))
            .collect();
    }

    let mut rows: Vec<(Vec<String>, Vec<f64>, bool)> = combos
        .into_par_iter()
        .map(|settings| {
            let out = run_experiment(&name, &Overrides { seed: None, settings: settings.clone() }).expect("run");
            (settings, out.curve.mse.clone(), out.curve.any_diverged())
        })
        .collect();
    rows.sort_by(|a, b| a.1.last().unwrap().total_cmp(b.1.last().unwrap()));
    for (settings, mse, diverged) in rows {
        let peak = mse[0].max(mse[1]);
        let best6 = mse[1..mse.len().min(7)].iter().copied().fold(f64::INFINITY, f64::min);
        println!(
            "{:<70} e0={:.6} e1={:.6} final={:.6} drop1={:.0}% peak/min6={:.1} div={}",
            settings.join("; "),
            mse[0],
            mse[1],
            mse.last().unwrap(),
            100.0 * (1.0 - mse[1] / mse[0]),
            peak / best6,
            diverged
        );
    }
}
