use mrl_core::*;
use std::sync::Arc;

#[test]
#[ignore]
fn probe_oracle_weight() {
    let truth = Study::S1.true_beta().vecl().to_vec();
    let q = truth.len();
    // Population efficient weight for the first study's hazard:
    // lambda(t|v) = A e^v / (1 + A e^v) with A = 1 + t^2, so
    // lambda_2 / lambda = 1 - lambda = 1 / (1 + A e^v).
    let oracle = WeightFunction::Custom(Arc::new(|t: f64, v: &[f64]| {
        let a = 1.0 + t * t;
        vec![1.0 / (1.0 + a * v[0].exp())]
    }));
    for wname in ["oracle", "estimated"] {
    for (ch, dn) in [(0.7f64, None), (1.0, None)] {
        let mut devs: Vec<Vec<f64>> = Vec::new();
        let mut nconv = 0;
        let mut total = 0.0f64;
        for seed in 3001u64..3013 {
            let spec = StudySpec { seed, ..StudySpec::new(Study::S1, 500, 0.0, 0).unwrap() };
            let ds = generate_study(&spec).unwrap();
            let cfg = EstimatorConfig {
                c_h: ch,
                c_b: 1.0,
                d_n: dn,
                seed,
                n_starts: 2,
                ..Default::default()
            };
            let t0 = std::time::Instant::now();
            let w = if wname == "oracle" { oracle.clone() } else { WeightFunction::Efficient };
            let rep = solve_beta(&ds, 1, &w, &cfg).unwrap();
            let th = rep.beta_hat.vecl().to_vec();
            total += t0.elapsed().as_secs_f64();
            if rep.converged {
                nconv += 1;
            }
            devs.push(th.iter().zip(&truth).map(|(a, b)| a - b).collect());
        }
        let nr = devs.len();
        let mut line = String::new();
        let mut max_bias: f64 = 0.0;
        let mut max_sd: f64 = 0.0;
        let mut min_sd = f64::INFINITY;
        for k in 0..q {
            let m: f64 = devs.iter().map(|d| d[k]).sum::<f64>() / nr as f64;
            let sd: f64 =
                (devs.iter().map(|d| (d[k] - m).powi(2)).sum::<f64>() / (nr - 1) as f64).sqrt();
            line.push_str(&format!(" {m:+.3}/{sd:.3}"));
            max_bias = max_bias.max(m.abs());
            max_sd = max_sd.max(sd);
            min_sd = min_sd.min(sd);
        }
        eprintln!("{wname} ch={ch} dn={dn:?} comps:{line}");
        eprintln!(
            "{wname} ch={ch} dn={dn:?} SUMMARY conv {nconv}/{nr}: max|bias| {max_bias:.3} sd [{min_sd:.3},{max_sd:.3}] avg {:.0}s",
            total / nr as f64
        );
    }
    }
}
