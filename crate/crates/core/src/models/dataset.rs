//! Self-describing columnar dataset files.
//!
//! A dataset file is plain text: `#`-prefixed header lines carrying the
//! model kind, the generating seed and every model parameter (enough to
//! regenerate the data exactly), one `# columns:` line naming the columns,
//! then one row per time step with the latent and observed values. Floats
//! are written in shortest round-trip form, so a load/save cycle is
//! bit-exact.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::Error;
use crate::models::hmm::DiscreteHmm;
use crate::models::lgssm::LgssmParams;
use crate::models::nlssm::NlssmParams;

/// One synthetic dataset plus everything needed to regenerate it.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub kind: String,
    pub seed: u64,
    /// Ordered parameter entries; values are space-separated numbers.
    pub header: Vec<(String, String)>,
    pub latents: Vec<Vec<f64>>,
    pub observations: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn dim_latent(&self) -> usize {
        self.latents.first().map_or(0, Vec::len)
    }

    pub fn dim_obs(&self) -> usize {
        self.observations.first().map_or(0, Vec::len)
    }

    fn header_value(&self, key: &str) -> Result<&str, Error> {
        self.header
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Model(format!("dataset header missing key '{key}'")))
    }

    fn header_floats(&self, key: &str) -> Result<Vec<f64>, Error> {
        self.header_value(key)?
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|_| Error::Model(format!("bad float '{tok}' in header key '{key}'")))
            })
            .collect()
    }

    pub fn from_lgssm(
        params: &LgssmParams,
        seed: u64,
        latents: Vec<Vec<f64>>,
        observations: Vec<Vec<f64>>,
    ) -> Dataset {
        let header = vec![
            ("dim_latent".into(), params.dim_latent().to_string()),
            ("dim_obs".into(), params.dim_obs().to_string()),
            ("mu".into(), floats(params.mu.iter())),
            ("v".into(), floats(params.v.iter())),
            ("alpha".into(), floats(params.alpha.iter())),
            ("omega".into(), floats(params.omega.iter())),
            ("beta".into(), floats(params.beta.iter())),
            ("sigma".into(), floats(params.sigma.iter())),
        ];
        Dataset {
            kind: "lgssm".into(),
            seed,
            header,
            latents,
            observations,
        }
    }

    pub fn lgssm_params(&self) -> Result<LgssmParams, Error> {
        if self.kind != "lgssm" {
            return Err(Error::Model(format!(
                "dataset kind '{}' is not lgssm",
                self.kind
            )));
        }
        let dx: usize = parse_usize(self.header_value("dim_latent")?)?;
        let dy: usize = parse_usize(self.header_value("dim_obs")?)?;
        let params = LgssmParams {
            mu: DVector::from_vec(self.header_floats("mu")?),
            v: matrix(dx, dx, self.header_floats("v")?)?,
            alpha: matrix(dx, dx, self.header_floats("alpha")?)?,
            omega: matrix(dx, dx, self.header_floats("omega")?)?,
            beta: matrix(dy, dx, self.header_floats("beta")?)?,
            sigma: matrix(dy, dy, self.header_floats("sigma")?)?,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn from_nlssm(
        params: &NlssmParams,
        seed: u64,
        latents: Vec<Vec<f64>>,
        observations: Vec<Vec<f64>>,
    ) -> Dataset {
        let header = vec![
            ("mu".into(), format!("{}", params.mu)),
            ("v".into(), format!("{}", params.v)),
            ("omega".into(), format!("{}", params.omega)),
            ("sigma".into(), format!("{}", params.sigma)),
        ];
        Dataset {
            kind: "nlssm".into(),
            seed,
            header,
            latents,
            observations,
        }
    }

    pub fn nlssm_params(&self) -> Result<NlssmParams, Error> {
        if self.kind != "nlssm" {
            return Err(Error::Model(format!(
                "dataset kind '{}' is not nlssm",
                self.kind
            )));
        }
        let get = |key: &str| -> Result<f64, Error> {
            Ok(self.header_floats(key)?[0])
        };
        let params = NlssmParams {
            mu: get("mu")?,
            v: get("v")?,
            omega: get("omega")?,
            sigma: get("sigma")?,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn from_hmm(
        hmm: &DiscreteHmm,
        seed: u64,
        states: &[usize],
        symbols: &[usize],
    ) -> Dataset {
        let s = hmm.states();
        let header = vec![
            ("states".into(), s.to_string()),
            ("symbols".into(), hmm.symbols().to_string()),
            ("initial".into(), floats(hmm.initial().iter())),
            (
                "transition".into(),
                floats(hmm.transition().iter().flatten()),
            ),
            ("emission".into(), floats(hmm.emission().iter().flatten())),
        ];
        Dataset {
            kind: "hmm".into(),
            seed,
            header,
            latents: states.iter().map(|&x| vec![x as f64]).collect(),
            observations: symbols.iter().map(|&y| vec![y as f64]).collect(),
        }
    }

    pub fn hmm(&self) -> Result<DiscreteHmm, Error> {
        if self.kind != "hmm" {
            return Err(Error::Model(format!(
                "dataset kind '{}' is not hmm",
                self.kind
            )));
        }
        let s: usize = parse_usize(self.header_value("states")?)?;
        let k: usize = parse_usize(self.header_value("symbols")?)?;
        let rows = |flat: Vec<f64>, cols: usize| -> Vec<Vec<f64>> {
            flat.chunks(cols).map(<[f64]>::to_vec).collect()
        };
        DiscreteHmm::new(
            self.header_floats("initial")?,
            rows(self.header_floats("transition")?, s),
            rows(self.header_floats("emission")?, k),
        )
    }

    /// Observation symbols of a discrete dataset.
    pub fn observation_symbols(&self) -> Vec<usize> {
        self.observations.iter().map(|y| y[0] as usize).collect()
    }

    pub fn write(&self, w: &mut impl Write) -> Result<(), Error> {
        writeln!(w, "# model = {}", self.kind)?;
        writeln!(w, "# seed = {}", self.seed)?;
        for (k, v) in &self.header {
            writeln!(w, "# {k} = {v}")?;
        }
        let dx = self.dim_latent();
        let dy = self.dim_obs();
        let mut cols = String::from("t");
        for i in 0..dx {
            let _ = write!(cols, " x{i}");
        }
        for i in 0..dy {
            let _ = write!(cols, " y{i}");
        }
        writeln!(w, "# columns: {cols}")?;
        for t in 0..self.len() {
            let mut row = t.to_string();
            for v in &self.latents[t] {
                let _ = write!(row, " {v}");
            }
            for v in &self.observations[t] {
                let _ = write!(row, " {v}");
            }
            writeln!(w, "{row}")?;
        }
        Ok(())
    }

    pub fn read(r: impl BufRead) -> Result<Dataset, Error> {
        let mut kind = None;
        let mut seed = None;
        let mut header = Vec::new();
        let mut columns: Option<(usize, usize)> = None;
        let mut latents = Vec::new();
        let mut observations = Vec::new();
        for (line_no, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some(cols) = rest.strip_prefix("columns:") {
                    let names: Vec<&str> = cols.split_whitespace().collect();
                    let dx = names.iter().filter(|n| n.starts_with('x')).count();
                    let dy = names.iter().filter(|n| n.starts_with('y')).count();
                    columns = Some((dx, dy));
                } else if let Some((k, v)) = rest.split_once('=') {
                    let k = k.trim().to_string();
                    let v = v.trim().to_string();
                    match k.as_str() {
                        "model" => kind = Some(v),
                        "seed" => {
                            seed = Some(v.parse::<u64>().map_err(|_| {
                                Error::Model(format!("bad seed '{v}' on line {}", line_no + 1))
                            })?)
                        }
                        _ => header.push((k, v)),
                    }
                }
                continue;
            }
            let (dx, dy) = columns.ok_or_else(|| {
                Error::Model(format!("data before '# columns:' on line {}", line_no + 1))
            })?;
            let values: Vec<f64> = line
                .split_whitespace()
                .skip(1)
                .map(|tok| {
                    tok.parse::<f64>().map_err(|_| {
                        Error::Model(format!("bad value '{tok}' on line {}", line_no + 1))
                    })
                })
                .collect::<Result<_, _>>()?;
            if values.len() != dx + dy {
                return Err(Error::Model(format!(
                    "row on line {} has {} values, expected {}",
                    line_no + 1,
                    values.len(),
                    dx + dy
                )));
            }
            latents.push(values[..dx].to_vec());
            observations.push(values[dx..].to_vec());
        }
        Ok(Dataset {
            kind: kind.ok_or_else(|| Error::Model("dataset missing '# model =' line".into()))?,
            seed: seed.ok_or_else(|| Error::Model("dataset missing '# seed =' line".into()))?,
            header,
            latents,
            observations,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), Error> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write(&mut file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Dataset, Error> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        Dataset::read(file)
    }
}

fn floats<'a>(values: impl Iterator<Item = &'a f64>) -> String {
    let mut out = String::new();
    for (k, v) in values.enumerate() {
        if k > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{v}");
    }
    out
}

fn matrix(rows: usize, cols: usize, flat: Vec<f64>) -> Result<DMatrix<f64>, Error> {
    if flat.len() != rows * cols {
        return Err(Error::Model(format!(
            "matrix needs {rows}x{cols} = {} entries, got {}",
            rows * cols,
            flat.len()
        )));
    }
    // nalgebra iterates column-major; header stores the same order.
    Ok(DMatrix::from_vec(rows, cols, flat))
}

fn parse_usize(v: &str) -> Result<usize, Error> {
    v.parse::<usize>()
        .map_err(|_| Error::Model(format!("bad integer '{v}' in dataset header")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::lgssm::{lgssm_simulate, make_lgssm};
    use crate::models::nlssm::{make_nlssm, nlssm_simulate};
    use crate::rng::RandomStream;

    #[test]
    fn lgssm_round_trip_is_bit_exact() {
        let (params, _) = make_lgssm(21);
        let mut rng = RandomStream::root(2);
        let (latents, obs) = lgssm_simulate(&params, 5, &mut rng).unwrap();
        let ds = Dataset::from_lgssm(&params, 21, latents, obs);
        let mut buf = Vec::new();
        ds.write(&mut buf).unwrap();
        let back = Dataset::read(&buf[..]).unwrap();
        assert_eq!(ds, back);
        assert_eq!(back.lgssm_params().unwrap(), params);
    }

    #[test]
    fn nlssm_round_trip() {
        let (params, _) = make_nlssm();
        let mut rng = RandomStream::root(3);
        let (latents, obs) = nlssm_simulate(&params, 7, &mut rng).unwrap();
        let ds = Dataset::from_nlssm(&params, 9, latents, obs);
        let mut buf = Vec::new();
        ds.write(&mut buf).unwrap();
        let back = Dataset::read(&buf[..]).unwrap();
        assert_eq!(back.nlssm_params().unwrap(), params);
        assert_eq!(back.observations, ds.observations);
    }

    #[test]
    fn hmm_round_trip() {
        let hmm = DiscreteHmm::two_state_example();
        let mut rng = RandomStream::root(4);
        let (states, symbols) = hmm.simulate(6, &mut rng);
        let ds = Dataset::from_hmm(&hmm, 5, &states, &symbols);
        let mut buf = Vec::new();
        ds.write(&mut buf).unwrap();
        let back = Dataset::read(&buf[..]).unwrap();
        let hmm2 = back.hmm().unwrap();
        assert_eq!(hmm2.initial(), hmm.initial());
        assert_eq!(back.observation_symbols(), symbols);
    }

    #[test]
    fn missing_header_is_an_error() {
        let text = "0 1.0 2.0\n";
        assert!(Dataset::read(text.as_bytes()).is_err());
    }
}
