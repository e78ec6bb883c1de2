//! CSV storage of a decomposition: one file of eigenvalues
//! (`mode,lambda,residual`) and one of eigenvectors on the grid nodes,
//! preceded by `#` lines recording the grid, the shift and the digest of `V`.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};

use super::decomposition::{SpectralDecomposition, MIN_GAP};
use super::grid::Grid;
use super::operator::potential_digest;
use crate::error::{Error, Result};
use crate::problem::ModelSpec;

const ORTHONORMALITY_TOL: f64 = 1e-8;

pub fn write_eigenvalues<W: Write>(dec: &SpectralDecomposition, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["mode", "lambda", "residual"])?;
    for (k, (l, r)) in dec.eigenvalues.iter().zip(&dec.residuals).enumerate() {
        w.write_record([k.to_string(), l.to_string(), r.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_eigenvectors<W: Write>(dec: &SpectralDecomposition, mut out: W) -> Result<()> {
    let g = &dec.grid;
    writeln!(
        out,
        "# grid dimension={} radius={} points={}",
        g.dimension(),
        g.radius(),
        g.points_per_axis()
    )?;
    writeln!(out, "# shift={}", dec.shift)?;
    writeln!(out, "# potential_sha256={}", dec.potential_digest)?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["node".to_string()];
    header.extend((0..g.dimension()).map(|k| format!("x{k}")));
    header.extend((0..dec.modes()).map(|n| format!("phi_tilde_{n}")));
    w.write_record(&header)?;
    let mut x = vec![0.0; g.dimension()];
    for node in 0..g.node_count() {
        g.coordinates_into(node, &mut x);
        let mut rec = vec![node.to_string()];
        rec.extend(x.iter().map(|v| v.to_string()));
        rec.extend(dec.phi_tilde.iter().map(|p| p[node].to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn store_err(msg: impl Into<String>) -> Error {
    Error::Store(msg.into())
}

fn parse<T: std::str::FromStr>(map: &HashMap<String, String>, key: &str) -> Result<T> {
    map.get(key)
        .ok_or_else(|| store_err(format!("missing header key `{key}`")))?
        .parse()
        .map_err(|_| store_err(format!("bad value for header key `{key}`")))
}

/// Loads a stored decomposition and re-validates it against `spec`.
pub fn read_decomposition<R1: Read, R2: Read>(
    eigenvalues: R1,
    eigenvectors: R2,
    spec: &ModelSpec,
) -> Result<SpectralDecomposition> {
    let mut lambdas = Vec::new();
    let mut residuals = Vec::new();
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(eigenvalues);
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let mode: usize = rec
            .get(0)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| store_err("bad mode"))?;
        if mode != k {
            return Err(store_err(format!(
                "eigenvalue rows out of order at mode {mode}"
            )));
        }
        let l: f64 = rec
            .get(1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| store_err("bad lambda"))?;
        let r: f64 = rec
            .get(2)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| store_err("bad residual"))?;
        lambdas.push(l);
        residuals.push(r);
    }
    if lambdas.len() < 2 {
        return Err(store_err("fewer than two eigenvalues stored"));
    }
    if lambdas.windows(2).any(|w| w[1] < w[0]) {
        return Err(store_err("eigenvalues are not ascending"));
    }
    if lambdas[1] - lambdas[0] < MIN_GAP {
        return Err(Error::DegenerateGroundState {
            gap: lambdas[1] - lambdas[0],
        });
    }

    let mut text = String::new();
    BufReader::new(eigenvectors).read_to_string(&mut text)?;
    let mut meta = HashMap::new();
    for line in text.as_bytes().lines() {
        let line = line?;
        let Some(rest) = line.strip_prefix('#') else {
            break;
        };
        for tok in rest.split_whitespace() {
            if let Some((k, v)) = tok.split_once('=') {
                meta.insert(k.to_string(), v.to_string());
            }
        }
    }
    let grid = Grid::new(
        parse(&meta, "dimension")?,
        parse(&meta, "radius")?,
        parse(&meta, "points")?,
    )?;
    let shift: f64 = parse(&meta, "shift")?;
    let digest: String = parse(&meta, "potential_sha256")?;
    if grid.dimension() != spec.dimension {
        return Err(store_err("stored grid dimension differs from the model"));
    }
    let expected = potential_digest(spec);
    if digest != expected {
        return Err(store_err(
            "stored eigenvectors were computed for a different potential",
        ));
    }
    let modes = lambdas.len();
    let mut phi_tilde = vec![vec![0.0; grid.node_count()]; modes];
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != 1 + grid.dimension() + modes {
            return Err(store_err("eigenvector row has the wrong number of columns"));
        }
        let node: usize = rec[0].parse().map_err(|_| store_err("bad node index"))?;
        if node >= grid.node_count() {
            return Err(store_err("node index out of range"));
        }
        for (n, col) in phi_tilde.iter_mut().enumerate() {
            col[node] = rec[1 + grid.dimension() + n]
                .parse()
                .map_err(|_| store_err("bad eigenvector entry"))?;
        }
        rows += 1;
    }
    if rows != grid.node_count() {
        return Err(store_err(format!(
            "expected {} nodes, found {rows}",
            grid.node_count()
        )));
    }
    let potential = grid.sample(|x| spec.potential_value(x));
    let phi = phi_tilde
        .iter()
        .map(|pt| {
            pt.iter()
                .zip(&potential)
                .map(|(p, v)| p * (-v).exp())
                .collect()
        })
        .collect();
    let dec = SpectralDecomposition {
        weights: grid.weights(),
        grid,
        shift,
        eigenvalues: lambdas,
        phi_tilde,
        phi,
        residuals,
        potential,
        potential_digest: digest,
    };
    let err = dec.orthonormality_error();
    if !(err <= ORTHONORMALITY_TOL) {
        return Err(store_err(format!(
            "stored eigenvectors are not orthonormal (error {err:e})"
        )));
    }
    Ok(dec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::decompose;

    #[test]
    fn round_trip() {
        let m = ModelSpec::ornstein_uhlenbeck(1, -1.0, 0.5);
        let dec = decompose(&m, &Grid::new(1, 6.0, 121).unwrap(), 4, 1e-9).unwrap();
        let (mut a, mut b) = (Vec::new(), Vec::new());
        write_eigenvalues(&dec, &mut a).unwrap();
        write_eigenvectors(&dec, &mut b).unwrap();
        let back = read_decomposition(&a[..], &b[..], &m).unwrap();
        assert_eq!(back.eigenvalues(), dec.eigenvalues());
        assert_eq!(back.phi_tilde(3), dec.phi_tilde(3));
        assert_eq!(back.phi(2), dec.phi(2));

        let other = ModelSpec::harmonic(1);
        assert!(matches!(
            read_decomposition(&a[..], &b[..], &other),
            Err(Error::Store(_))
        ));
    }

    #[test]
    fn corrupted_vectors_are_rejected() {
        let m = ModelSpec::harmonic(1);
        let dec = decompose(&m, &Grid::new(1, 6.0, 121).unwrap(), 3, 1e-9).unwrap();
        let (mut a, mut b) = (Vec::new(), Vec::new());
        write_eigenvalues(&dec, &mut a).unwrap();
        write_eigenvectors(&dec, &mut b).unwrap();
        let text = String::from_utf8(b).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        // scale one entry of mode 0 near the centre
        let row = 4 + 60;
        let mut cols: Vec<String> = lines[row].split(',').map(String::from).collect();
        let v: f64 = cols[2].parse().unwrap();
        cols[2] = (v * 1.5).to_string();
        lines[row] = cols.join(",");
        let bad = lines.join("\n");
        assert!(read_decomposition(&a[..], bad.as_bytes(), &m).is_err());
    }
}
