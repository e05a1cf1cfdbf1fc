use dsinfer::loss::Loss;
use dsinfer::nodewise::LambdaRule;
use dsinfer::normal::{ks_critical, ks_distance_to_normal};
use dsinfer::simulate::{run_ci_experiment, run_fwer_experiment, DgpConfig, ErrorDist, PipelineOptions};

fn with_rule(loss: Loss) -> PipelineOptions {
    PipelineOptions {
        nodewise_rule: LambdaRule::Universal { scale: 0.125 },
        ..PipelineOptions::standard(loss)
    }
}

#[test]
fn probe2() {
    let cfg = DgpConfig { n: 500, p: 100, s0: 3, error_dist: ErrorDist::Gaussian, seed: 20260810 };
    let r = run_ci_experiment(&cfg, 100, &with_rule(Loss::Quadratic)).unwrap();
    let z: Vec<f64> = r.records.iter().filter(|rec| rec.j < 4).map(|rec| rec.z).collect();
    println!(
        "QUAD100: cov=({:.4},{:.4}) len=({:.4},{:.4}) ks={:.4}(crit {:.4}) idx={:.2e} kkt={:.2e}",
        r.aggregates.coverage_s0, r.aggregates.coverage_s0c,
        r.aggregates.length_s0, r.aggregates.length_s0c,
        ks_distance_to_normal(&z), ks_critical(0.01, z.len()),
        r.diagnostics.max_identity_excess, r.diagnostics.max_fit_kkt
    );

    let cfg = DgpConfig { n: 500, p: 100, s0: 3, error_dist: ErrorDist::T3, seed: 20260810 };
    let r = run_ci_experiment(&cfg, 100, &with_rule(Loss::Huber { k: 0.5 })).unwrap();
    println!(
        "HUBER100: cov=({:.4},{:.4}) len=({:.4},{:.4})",
        r.aggregates.coverage_s0, r.aggregates.coverage_s0c,
        r.aggregates.length_s0, r.aggregates.length_s0c
    );

    let cfg = DgpConfig { n: 400, p: 100, s0: 3, error_dist: ErrorDist::LogisticBernoulli, seed: 20260810 };
    let r = run_ci_experiment(&cfg, 100, &with_rule(Loss::Logistic)).unwrap();
    println!(
        "LOGIT100: cov=({:.4},{:.4}) len=({:.4},{:.4})",
        r.aggregates.coverage_s0, r.aggregates.coverage_s0c,
        r.aggregates.length_s0, r.aggregates.length_s0c
    );

    let f = run_fwer_experiment(&cfg, 200, &with_rule(Loss::Logistic)).unwrap();
    println!("FWER200: tpr={:.4} fwer={:.4}", f.tpr, f.fwer);
}
