//! Timeout selection from waiting-time bounds.
//!
//! The node with return time 5 and return variance 51 is the worked
//! example used throughout: first the Chebyshev waiting bound, then the
//! lost-token bound as a function of elapsed time, then the two tuning
//! methods side by side.
//!
//! Run with: `cargo run --example tune_timeout`

use tokenwalk::analysis::{
    chebyshev_return_bound, confidence_wait_time, lost_probability_bound, tune_timeout_closed_form,
    tune_timeout_scan,
};

fn main() {
    let (h, v) = (5.0, 51.0);
    println!("watched node: return time {h}, return variance {v}");
    println!(
        "P[token back within 50 steps] >= {:.6}",
        chebyshev_return_bound(h, v, 50.0)
    );
    println!(
        "to be 99% sure it came back, wait {:.2} steps",
        confidence_wait_time(h, v, 0.01).unwrap()
    );
    println!();

    let p = 0.1;
    println!("per-hop loss probability p = {p}");
    println!("P[token lost | unseen for t steps] lower bounds:");
    for t in [5u64, 10, 15, 19, 22, 23, 32, 40] {
        println!(
            "  t = {t:3}: {:.4}",
            lost_probability_bound(v, p, t).unwrap()
        );
    }
    println!();

    for eps in [0.10, 0.05, 0.01] {
        let scanned = tune_timeout_scan(v, p, eps, 10_000).unwrap();
        let closed = tune_timeout_closed_form(v, h, p, eps).unwrap();
        println!(
            "confidence {:.0}%: scan recommends t = {scanned}, closed form {closed:.2} \
             (conservative; scan is authoritative)",
            (1.0 - eps) * 100.0
        );
    }
}
