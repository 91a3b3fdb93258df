//! HILLS text files and trajectory CSV.

use std::io::{BufRead, BufReader, Read, Write};

use super::{BiasPotential, Hill, Trajectory};
use crate::error::{Error, Result};
use crate::features::csv::{csv_err, fmt_real};

/// One line per hill: `step center.. sigma.. height biasfactor`. Periods are
/// recorded in a `#! PERIODS` header so the bias can be rebuilt.
pub fn write_hills<W: Write>(mut out: W, bias: &BiasPotential, gamma: f64) -> Result<()> {
    let d = bias.dims();
    let names: Vec<String> = (1..=d).map(|i| format!("cv{i}")).collect();
    let sig: Vec<String> = names.iter().map(|n| format!("sigma_{n}")).collect();
    writeln!(out, "#! FIELDS step {} {} height biasfactor", names.join(" "), sig.join(" "))?;
    let periods: Vec<String> = bias
        .periods()
        .iter()
        .map(|p| p.map_or_else(|| "none".to_string(), fmt_real))
        .collect();
    writeln!(out, "#! PERIODS {}", periods.join(" "))?;
    for h in bias.hills() {
        let mut line = h.step.to_string();
        for v in h.center.iter().chain(&h.sigma) {
            line.push(' ');
            line.push_str(&fmt_real(*v));
        }
        line.push(' ');
        line.push_str(&fmt_real(h.height));
        line.push(' ');
        line.push_str(&fmt_real(gamma));
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Read hills back; returns the bias and the bias factor of the last line.
pub fn read_hills<R: Read>(input: R) -> Result<(BiasPotential, f64)> {
    let mut periods: Option<Vec<Option<f64>>> = None;
    let mut rows: Vec<(u64, Vec<f64>)> = Vec::new();
    for (n, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if let Some(rest) = t.strip_prefix("#! PERIODS") {
            periods = Some(
                rest.split_whitespace()
                    .map(|w| {
                        if w == "none" {
                            Ok(None)
                        } else {
                            w.parse().map(Some).map_err(|_| Error::Malformed(format!("line {}: bad period `{w}`", n + 1)))
                        }
                    })
                    .collect::<Result<_>>()?,
            );
            continue;
        }
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let mut fields = t.split_whitespace();
        let step = fields
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Malformed(format!("line {}: missing step", n + 1)))?;
        let vals = fields
            .map(|f| f.parse::<f64>().map_err(|_| Error::Malformed(format!("line {}: `{f}` is not a number", n + 1))))
            .collect::<Result<Vec<_>>>()?;
        rows.push((step, vals));
    }
    let width = rows.first().map(|r| r.1.len()).or(periods.as_ref().map(|p| 2 * p.len() + 2));
    let width = width.ok_or_else(|| Error::Malformed("empty HILLS file".into()))?;
    if width < 4 || width % 2 != 0 {
        return Err(Error::Malformed(format!("{width} values per hill cannot encode centers and widths")));
    }
    let d = (width - 2) / 2;
    let periods = periods.unwrap_or_else(|| vec![None; d]);
    if periods.len() != d {
        return Err(Error::Malformed(format!("{} periods for {d} CVs", periods.len())));
    }
    let mut bias = BiasPotential::with_periods(periods)?;
    let mut gamma = f64::NAN;
    for (step, v) in rows {
        if v.len() != width {
            return Err(Error::Malformed(format!("hill at step {step} has {} values, expected {width}", v.len())));
        }
        bias.push(Hill { step, center: v[..d].to_vec(), sigma: v[d..2 * d].to_vec(), height: v[2 * d] })
            .map_err(|e| Error::Malformed(e.to_string()))?;
        gamma = v[2 * d + 1];
    }
    Ok((bias, gamma))
}

/// Columns `step, q_1.., cv_1.., bias_energy`.
pub fn write_trajectory<W: Write>(out: W, traj: &Trajectory) -> Result<()> {
    let nq = traj.frames.first().map_or(0, Vec::len);
    let ns = traj.cvs.first().map_or(0, Vec::len);
    let mut w = ::csv::Writer::from_writer(out);
    let mut header = vec!["step".to_string()];
    header.extend((1..=nq).map(|i| format!("q_{i}")));
    header.extend((1..=ns).map(|i| format!("cv_{i}")));
    header.push("bias_energy".into());
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..traj.len() {
        let mut rec = vec![traj.steps[i].to_string()];
        rec.extend(traj.frames[i].iter().map(|v| fmt_real(*v)));
        rec.extend(traj.cvs[i].iter().map(|v| fmt_real(*v)));
        rec.push(fmt_real(traj.bias[i]));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectory<R: Read>(input: R) -> Result<Trajectory> {
    let mut r = ::csv::Reader::from_reader(input);
    let header = r.headers().map_err(csv_err)?.clone();
    let nq = header.iter().filter(|h| h.starts_with("q_")).count();
    let ns = header.iter().filter(|h| h.starts_with("cv_")).count();
    if header.len() != nq + ns + 2 || header.get(0) != Some("step") || header.get(header.len() - 1) != Some("bias_energy") {
        return Err(Error::Malformed("trajectory header must be step, q_*, cv_*, bias_energy".into()));
    }
    let mut t = Trajectory::default();
    for (n, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let step = rec[0]
            .parse()
            .map_err(|_| Error::Malformed(format!("row {}: bad step `{}`", n + 1, &rec[0])))?;
        let vals = rec
            .iter()
            .skip(1)
            .map(|f| f.parse::<f64>().map_err(|_| Error::Malformed(format!("row {}: `{f}` is not a number", n + 1))))
            .collect::<Result<Vec<_>>>()?;
        t.steps.push(step);
        t.frames.push(vals[..nq].to_vec());
        t.cvs.push(vals[nq..nq + ns].to_vec());
        t.bias.push(vals[nq + ns]);
    }
    Ok(t)
}
