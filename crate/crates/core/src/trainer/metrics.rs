use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{mse, SplitNet};
use crate::scenario::{Dataset, LABEL_DIM};

const NUM_PU: usize = 2;

/// Per-round log entry.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RoundMetrics {
    pub round: usize,
    /// `active[k]` for SU `k`.
    pub active: Vec<bool>,
    /// Server-side loss (MSE when `λ = 0`).
    pub train_mse: f64,
    pub test_mse: Option<f64>,
    /// `v_t = v_{0,t} + Σ_{k active} v_{k,t}`, on probed rounds.
    pub v_measured: Option<f64>,
    /// `v_{k,t}`, central first, on probed rounds.
    pub block_weights: Option<Vec<f64>>,
    pub t_comm: f64,
    pub t_comp: f64,
    pub t_cum: f64,
}

impl RoundMetrics {
    pub fn v0(&self) -> Option<f64> {
        self.block_weights.as_ref().map(|w| w[0])
    }

    /// Bit `k` set when SU `k` was active.
    pub fn active_mask(&self) -> u64 {
        self.active
            .iter()
            .enumerate()
            .filter(|(_, a)| **a)
            .fold(0, |m, (k, _)| m | (1 << k))
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes the metrics log. Columns: `round, active_set, train_mse, test_mse,
/// v0, v_measured, t_comm_s, t_comp_s, t_cum_s`, then `v1 … vK`.
pub fn write_metrics_csv<W: Write>(out: W, metrics: &[RoundMetrics], num_su: usize) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = [
        "round",
        "active_set",
        "train_mse",
        "test_mse",
        "v0",
        "v_measured",
        "t_comm_s",
        "t_comp_s",
        "t_cum_s",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((1..=num_su).map(|k| format!("v{k}")));
    w.write_record(&header).map_err(csv_err)?;
    for m in metrics {
        let mut rec = vec![
            m.round.to_string(),
            m.active_mask().to_string(),
            m.train_mse.to_string(),
            opt(m.test_mse),
            opt(m.v0()),
            opt(m.v_measured),
            m.t_comm.to_string(),
            m.t_comp.to_string(),
            m.t_cum.to_string(),
        ];
        for k in 1..=num_su {
            rec.push(opt(m.block_weights.as_ref().map(|w| w[k])));
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a log written by [`write_metrics_csv`].
pub fn read_metrics_csv<R: Read>(input: R) -> Result<Vec<RoundMetrics>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(csv_err)?.clone();
    if header.len() < 9 || &header[0] != "round" {
        return Err(Error::MalformedHeader("not a metrics log".into()));
    }
    let num_su = header.len() - 9;
    let num = |s: &str, col: &str| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|_| Error::MalformedHeader(format!("bad value {s:?} in column {col}")))
    };
    let maybe = |s: &str, col: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            num(s, col).map(Some)
        }
    };
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let round = rec[0]
            .parse()
            .map_err(|_| Error::MalformedHeader(format!("bad round {:?}", &rec[0])))?;
        let mask: u64 = rec[1]
            .parse()
            .map_err(|_| Error::MalformedHeader(format!("bad active_set {:?}", &rec[1])))?;
        let v0 = maybe(&rec[4], "v0")?;
        let block_weights = match v0 {
            Some(v0) => {
                let mut w = vec![v0];
                for k in 0..num_su {
                    w.push(num(&rec[9 + k], "v_k")?);
                }
                Some(w)
            }
            None => None,
        };
        out.push(RoundMetrics {
            round,
            active: (0..num_su).map(|k| mask >> k & 1 == 1).collect(),
            train_mse: num(&rec[2], "train_mse")?,
            test_mse: maybe(&rec[3], "test_mse")?,
            v_measured: maybe(&rec[5], "v_measured")?,
            block_weights,
            t_comm: num(&rec[6], "t_comm_s")?,
            t_comp: num(&rec[7], "t_comp_s")?,
            t_cum: num(&rec[8], "t_cum_s")?,
        });
    }
    Ok(out)
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::MalformedHeader(format!("{other:?}")),
    }
}

/// Test-set quality of a trained network.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    /// MSE over the raw 8-dimensional labels.
    pub mse: f64,
    /// Fraction of samples whose rounded power matches, per PU.
    pub power_accuracy: Vec<f64>,
    /// 3D location error per PU, one entry per sample.
    pub location_errors: Vec<Vec<f64>>,
    pub predictions: Matrix,
}

/// The member of `levels` closest to `value`; ties go to the earlier one.
pub fn nearest_level(value: f64, levels: &[f64]) -> f64 {
    let mut best = levels[0];
    for &l in &levels[1..] {
        if (value - l).abs() < (value - best).abs() {
            best = l;
        }
    }
    best
}

pub fn evaluate_predictions(
    predictions: &Matrix,
    labels: &Matrix,
    power_levels: &[f64],
) -> Result<Evaluation> {
    if labels.rows() == 0 {
        return Err(Error::EmptyBatch);
    }
    if labels.cols() != LABEL_DIM {
        return Err(Error::DimensionMismatch {
            what: "label width",
            expected: LABEL_DIM,
            got: labels.cols(),
        });
    }
    if power_levels.is_empty() {
        return Err(Error::InvalidConfig("power level set is empty".into()));
    }
    let value = mse(predictions, labels)?;
    let n = labels.rows();
    let mut hits = [0usize; NUM_PU];
    let mut errors: Vec<Vec<f64>> = (0..NUM_PU).map(|_| Vec::with_capacity(n)).collect();
    for i in 0..n {
        let (p, y) = (predictions.row(i), labels.row(i));
        for j in 0..NUM_PU {
            if nearest_level(p[j], power_levels) == y[j] {
                hits[j] += 1;
            }
            let o = NUM_PU + 3 * j;
            let d2: f64 = (o..o + 3).map(|c| (p[c] - y[c]) * (p[c] - y[c])).sum();
            errors[j].push(d2.sqrt());
        }
    }
    Ok(Evaluation {
        mse: value,
        power_accuracy: hits.iter().map(|&h| h as f64 / n as f64).collect(),
        location_errors: errors,
        predictions: predictions.clone(),
    })
}

/// Evaluates `net` with fresh activations from every SU on the test split.
pub fn evaluate(net: &SplitNet, dataset: &Dataset) -> Result<Evaluation> {
    let rows = dataset.test_indices();
    if rows.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let x: Vec<Matrix> = (0..dataset.num_su())
        .map(|k| dataset.normalized(k, &rows))
        .collect();
    let pred = net.predict(&x)?;
    evaluate_predictions(&pred, &dataset.labels_of(&rows), &dataset.config.power_levels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels() -> Matrix {
        Matrix::from_rows(&[
            [1.0, 3.0, 10.0, 20.0, 1.0, 300.0, 100.0, -2.0],
            [2.0, 1.0, 50.0, 60.0, 5.0, 200.0, 150.0, 3.0],
            [3.0, 2.0, 90.0, 20.0, 0.0, 310.0, 120.0, 7.0],
        ])
        .unwrap()
    }

    #[test]
    fn perfect_predictions() {
        let y = labels();
        let e = evaluate_predictions(&y, &y, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(e.mse, 0.0);
        assert_eq!(e.power_accuracy, vec![1.0, 1.0]);
        assert!(e.location_errors.iter().flatten().all(|&d| d == 0.0));
    }

    #[test]
    fn unit_shift_on_first_power() {
        let y = labels();
        let mut p = y.clone();
        for i in 0..p.rows() {
            p.row_mut(i)[0] += 1.0;
        }
        let e = evaluate_predictions(&p, &y, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(e.mse, 1.0);
        // only the level-3 sample survives the shift (4 rounds back to 3)
        assert!((e.power_accuracy[0] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(e.power_accuracy[1], 1.0);
    }

    #[test]
    fn location_error_is_euclidean() {
        let y = labels();
        let mut p = y.clone();
        p.row_mut(1)[5] += 3.0;
        p.row_mut(1)[6] += 4.0;
        let e = evaluate_predictions(&p, &y, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(e.location_errors[1], vec![0.0, 5.0, 0.0]);
    }

    #[test]
    fn rejects_empty_set() {
        let z = Matrix::zeros(0, LABEL_DIM);
        assert!(matches!(
            evaluate_predictions(&z, &z, &[1.0]),
            Err(Error::EmptyBatch)
        ));
    }

    #[test]
    fn nearest_level_ties_go_low() {
        assert_eq!(nearest_level(1.5, &[1.0, 2.0, 3.0]), 1.0);
        assert_eq!(nearest_level(2.6, &[1.0, 2.0, 3.0]), 3.0);
        assert_eq!(nearest_level(-5.0, &[1.0, 2.0, 3.0]), 1.0);
    }

    #[test]
    fn csv_round_trip() {
        let m = vec![
            RoundMetrics {
                round: 0,
                active: vec![true, false, true],
                train_mse: 1.0 / 3.0,
                test_mse: Some(0.1),
                v_measured: Some(0.7),
                block_weights: Some(vec![0.5, 0.1, 0.2, 0.2]),
                t_comm: 0.25,
                t_comp: 1e-3,
                t_cum: 0.251,
            },
            RoundMetrics {
                round: 1,
                active: vec![false, false, false],
                train_mse: 2.0,
                t_comm: 0.25,
                t_cum: 0.501,
                ..Default::default()
            },
        ];
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &m, 3).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "round,active_set,train_mse,test_mse,v0,v_measured,t_comm_s,t_comp_s,t_cum_s,v1,v2,v3"
        ));
        assert_eq!(read_metrics_csv(&buf[..]).unwrap(), m);
        assert!(read_metrics_csv(&b"a,b\n1,2\n"[..]).is_err());
    }
}
