use fmradio_web::Demo;

fn demo() -> Demo {
    Demo::simulate(24, 3, 0.8, 150, 0.8, 7).unwrap()
}

#[test]
fn simulated_data_have_outcomes() {
    let d = demo();
    let surv = d.raw().survival.as_ref().unwrap();
    assert_eq!(d.raw().nrows(), 150);
    assert_eq!(d.raw().ncols(), 24);
    assert!(surv.events() > 30 && surv.events() < 150);
}

#[test]
fn shrinkage_view_is_consistent() {
    let v = demo().shrinkage().unwrap();
    assert!(v.theta > 0.0 && v.theta <= 1.0);
    assert!(v.trace.iter().all(|&(_, s)| s >= v.cv_score));
    assert_eq!(v.guttman_m, v.shrunken.iter().filter(|&&e| e > 1.0).count());
    assert!(v.condition_number <= v.condition_number_raw);
}

#[test]
fn factors_carry_the_generating_communality() {
    let v = demo().factors(Some(3)).unwrap();
    assert_eq!(v.m, 3);
    assert_eq!(v.loadings.len(), 24);
    assert_eq!(v.assignment.len(), 24);
    // every row was generated with communality .8; shrinkage pulls the
    // fitted values down by roughly the factor 1 - theta
    let mean = v
        .loadings
        .iter()
        .map(|r| r.iter().map(|l| l * l).sum::<f64>())
        .sum::<f64>()
        / 24.0;
    assert!((0.6..0.9).contains(&mean), "mean communality {mean}");
}

#[test]
fn prediction_error_reports_both_variants() {
    let v = demo().prediction_error(Some(3), 2).unwrap();
    assert_eq!(v.curves.len(), 4);
    assert_eq!(v.summaries.len(), 2);
    let json = serde_json::to_value(&v.summaries).unwrap();
    assert_eq!(json[1]["variant"], "cv_averaged");
    assert!(v.curves.iter().all(|c| c.scores.iter().all(|&s| s >= 0.0)));
}
