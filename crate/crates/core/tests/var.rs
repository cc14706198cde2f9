use qtsgen::baselines::{fit_var, forecast_var, naive_forecast, DEFAULT_MAX_LAGS};
use qtsgen::eval::mse_price;
use qtsgen::synthetic::simulate_var;

fn truth() -> Vec<Vec<Vec<f64>>> {
    vec![
        vec![vec![0.5, 0.1], vec![0.0, 0.4]],
        vec![vec![0.25, 0.0], vec![0.1, -0.3]],
    ]
}

#[test]
fn aic_recovers_order_and_coefficients() {
    let a = truth();
    let mut hits = 0;
    for seed in 0..5 {
        let cols = simulate_var(&a, &[0.2, -0.1], 1.0, 1000, seed);
        let m = fit_var(&cols, DEFAULT_MAX_LAGS).unwrap();
        assert_eq!(m.aic_by_order.len(), DEFAULT_MAX_LAGS);
        if m.p == 2 {
            hits += 1;
            for lag in 0..2 {
                for i in 0..2 {
                    for j in 0..2 {
                        assert!((m.coefficients[lag][i][j] - a[lag][i][j]).abs() < 0.1, "seed {seed}");
                    }
                }
            }
        }
        let cov = &m.residual_covariance;
        assert_eq!(cov[0][1], cov[1][0]);
        assert!(cov[0][0] > 0.0 && cov[0][0] * cov[1][1] >= cov[0][1] * cov[0][1]);
    }
    assert!(hits >= 4, "p = 2 chosen {hits}/5 times");
}

#[test]
fn naive_forecast_of_constant_series_is_exact() {
    let prices = vec![42.0; 30];
    let f = naive_forecast(&prices, 10).unwrap();
    assert_eq!(mse_price(&f, &[42.0; 10]).unwrap(), 0.0);
    let m = fit_var(&simulate_var(&truth(), &[0.0, 0.0], 1.0, 300, 1), 4).unwrap();
    assert!(forecast_var(&m, &[vec![], vec![]], 3).is_err());
}
