//! Flat CSV storage of kept draws, one column per scalar:
//! `pi_k`, then `theta_j_k_r`, then `xi_k_p`, all 1-based.
//!
//! Values are written in Rust's shortest round-trip form, so reading a file
//! back yields the exact draws that were written.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ModelParams, ThetaArray};

pub fn chain_header(k: usize, levels: &[usize], q: usize) -> Vec<String> {
    let mut h: Vec<String> = (1..=k).map(|c| format!("pi_{c}")).collect();
    for (j, &r_j) in levels.iter().enumerate() {
        for c in 1..=k {
            for r in 1..=r_j {
                h.push(format!("theta_{}_{c}_{r}", j + 1));
            }
        }
    }
    for c in 1..=k {
        for p in 1..=q {
            h.push(format!("xi_{c}_{p}"));
        }
    }
    h
}

fn draw_values(d: &ModelParams) -> Vec<f64> {
    let mut v = d.pi.clone();
    for j in 0..d.theta.n_items() {
        for k in 0..d.k() {
            v.extend_from_slice(d.theta.simplex(j, k));
        }
    }
    v.extend_from_slice(&d.xi);
    v
}

pub fn write_chain<W: Write>(out: W, draws: &[ModelParams]) -> Result<()> {
    let first = draws.first().ok_or_else(|| Error::invalid("no draws to write"))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(chain_header(first.k(), &first.theta.levels, first.q))?;
    for d in draws {
        w.write_record(draw_values(d).iter().map(f64::to_string))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_chain_file(path: &Path, draws: &[ModelParams]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_chain(std::io::BufWriter::new(file), draws)
}

/// Shape implied by a chain header; rejects anything [`chain_header`] would not produce.
fn parse_header(header: &csv::StringRecord) -> Result<(usize, Vec<usize>, usize)> {
    let bad = |msg: String| Error::invalid(format!("chain header: {msg}"));
    let fields: Vec<&str> = header.iter().collect();
    let k = fields.iter().take_while(|f| f.starts_with("pi_")).count();
    if k == 0 {
        return Err(bad("no pi_ columns".into()));
    }
    let mut levels: Vec<usize> = Vec::new();
    let mut q = 0;
    for f in &fields[k..] {
        let parts: Vec<&str> = f.split('_').collect();
        match parts.as_slice() {
            ["theta", j, _, r] => {
                let j: usize = j.parse().map_err(|_| bad(format!("bad column '{f}'")))?;
                let r: usize = r.parse().map_err(|_| bad(format!("bad column '{f}'")))?;
                if j == 0 {
                    return Err(bad(format!("bad column '{f}'")));
                }
                if levels.len() < j {
                    levels.resize(j, 0);
                }
                levels[j - 1] = levels[j - 1].max(r);
            }
            ["xi", c, p] if *c == "1" => {
                q = q.max(p.parse().map_err(|_| bad(format!("bad column '{f}'")))?);
            }
            ["xi", _, _] => {}
            _ => return Err(bad(format!("unexpected column '{f}'"))),
        }
    }
    if levels.is_empty() || levels.contains(&0) {
        return Err(bad("theta columns are incomplete".into()));
    }
    if chain_header(k, &levels, q) != fields {
        return Err(bad("columns are not in the expected layout".into()));
    }
    Ok((k, levels, q))
}

pub fn read_chain<R: Read>(input: R) -> Result<Vec<ModelParams>> {
    let mut rdr = csv::Reader::from_reader(input);
    let (k, levels, q) = parse_header(rdr.headers()?)?;
    let mut draws = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::invalid(format!("chain row {}: {e}", row + 1)))?;
        let values: Vec<f64> = rec
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::invalid(format!("chain row {}: {e}", row + 1)))?;
        let mut it = values.into_iter();
        let pi: Vec<f64> = it.by_ref().take(k).collect();
        let mut theta = ThetaArray::uniform(&levels, k);
        for j in 0..levels.len() {
            for c in 0..k {
                for x in theta.simplex_mut(j, c) {
                    *x = it.next().unwrap_or(f64::NAN);
                }
            }
        }
        let xi: Vec<f64> = it.collect();
        let d = ModelParams { pi, theta, q, xi };
        d.check().map_err(|e| Error::invalid(format!("chain row {}: {e}", row + 1)))?;
        draws.push(d);
    }
    if draws.is_empty() {
        return Err(Error::invalid("chain file has no draws"));
    }
    Ok(draws)
}

pub fn read_chain_file(path: &Path) -> Result<Vec<ModelParams>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::invalid(format!("cannot open chain {}: {e}", path.display())))?;
    read_chain(std::io::BufReader::new(file))
}
