//! Plain-text network file format.
//!
//! The format is line-oriented key/value text. Probabilities are written
//! with 17 significant digits so a load/save round trip is value-exact.
//!
//! ```text
//! format_version 1
//! seed 7
//! layer_sizes 8 8 8
//! rf_priors <p0> ... <p7>
//! disease_leaks <l0> ... <l7>
//! disease_edges <count>
//! <rf_index> <disease_index> <weight>
//! ...
//! symptom_leaks <l0> ... <l7>
//! symptom_edges <count>
//! <disease_index> <symptom_index> <weight>
//! ...
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::{LayerSizes, NetworkError, NoisyOrNetwork};

pub const NETWORK_FORMAT_VERSION: u32 = 1;

fn fmt_prob(v: f64) -> String {
    // 17 significant digits: enough for an exact f64 round trip.
    format!("{v:.16e}")
}

struct LineParser<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> LineParser<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            lines: text.lines().enumerate(),
        }
    }

    fn next_line(&mut self) -> Result<(usize, &'a str), NetworkError> {
        for (idx, raw) in self.lines.by_ref() {
            let line = raw.trim();
            if !line.is_empty() {
                return Ok((idx + 1, line));
            }
        }
        Err(NetworkError::Parse {
            line: 0,
            message: "unexpected end of file".into(),
        })
    }

    /// Next non-empty line, which must start with `key`; returns the rest.
    fn expect_key(&mut self, key: &str) -> Result<(usize, &'a str), NetworkError> {
        let (line_no, line) = self.next_line()?;
        match line.strip_prefix(key) {
            Some(rest) if rest.is_empty() || rest.starts_with(char::is_whitespace) => {
                Ok((line_no, rest.trim()))
            }
            _ => Err(NetworkError::Parse {
                line: line_no,
                message: format!("expected field `{key}`"),
            }),
        }
    }
}

fn parse_all<T: FromStr>(line_no: usize, text: &str) -> Result<Vec<T>, NetworkError> {
    text.split_whitespace()
        .map(|tok| {
            tok.parse::<T>().map_err(|_| NetworkError::Parse {
                line: line_no,
                message: format!("bad value `{tok}`"),
            })
        })
        .collect()
}

fn parse_one<T: FromStr>(line_no: usize, text: &str) -> Result<T, NetworkError> {
    let vals = parse_all::<T>(line_no, text)?;
    if vals.len() != 1 {
        return Err(NetworkError::Parse {
            line: line_no,
            message: format!("expected a single value, got {}", vals.len()),
        });
    }
    Ok(vals.into_iter().next().unwrap())
}

fn read_edges(
    p: &mut LineParser<'_>,
    key: &str,
    child_count: usize,
) -> Result<Vec<Vec<(usize, f64)>>, NetworkError> {
    let (line_no, count) = p.expect_key(key)?;
    let count = parse_one::<usize>(line_no, count)?;
    let mut rows = vec![Vec::new(); child_count];
    for _ in 0..count {
        let (line_no, edge) = p.next_line()?;
        let toks: Vec<&str> = edge.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(NetworkError::Parse {
                line: line_no,
                message: "edge lines carry parent, child and weight".into(),
            });
        }
        let parent = parse_one::<usize>(line_no, toks[0])?;
        let child = parse_one::<usize>(line_no, toks[1])?;
        let weight = parse_one::<f64>(line_no, toks[2])?;
        if child >= child_count {
            return Err(NetworkError::Parse {
                line: line_no,
                message: format!("child index {child} out of range"),
            });
        }
        rows[child].push((parent, weight));
    }
    Ok(rows)
}

impl NoisyOrNetwork {
    /// Serialises the network to its text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "format_version {NETWORK_FORMAT_VERSION}");
        match self.seed() {
            Some(s) => {
                let _ = writeln!(out, "seed {s}");
            }
            None => {
                let _ = writeln!(out, "seed -");
            }
        }
        let LayerSizes {
            risk_factors,
            diseases,
            symptoms,
        } = self.layer_sizes();
        let _ = writeln!(out, "layer_sizes {risk_factors} {diseases} {symptoms}");
        let join = |vals: &[f64]| {
            vals.iter()
                .map(|&v| fmt_prob(v))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let _ = writeln!(out, "rf_priors {}", join(self.rf_priors()));
        let _ = writeln!(out, "disease_leaks {}", join(self.disease_leaks()));
        let (d_edges, s_edges) = self.edge_counts();
        let _ = writeln!(out, "disease_edges {d_edges}");
        for i in 0..diseases {
            for &(j, w) in self.disease_parents(i) {
                let _ = writeln!(out, "{j} {i} {}", fmt_prob(w));
            }
        }
        let _ = writeln!(out, "symptom_leaks {}", join(self.symptom_leaks()));
        let _ = writeln!(out, "symptom_edges {s_edges}");
        for k in 0..symptoms {
            for &(i, w) in self.symptom_parents(k) {
                let _ = writeln!(out, "{i} {k} {}", fmt_prob(w));
            }
        }
        out
    }

    /// Parses a network from its text format.
    pub fn from_text(text: &str) -> Result<Self, NetworkError> {
        let mut p = LineParser::new(text);

        let (_, version) = p.expect_key("format_version")?;
        if version != NETWORK_FORMAT_VERSION.to_string() {
            return Err(NetworkError::UnsupportedVersion {
                found: version.to_string(),
                expected: NETWORK_FORMAT_VERSION,
            });
        }

        let (line_no, seed_text) = p.expect_key("seed")?;
        let seed = if seed_text == "-" {
            None
        } else {
            Some(parse_one::<u64>(line_no, seed_text)?)
        };

        let (line_no, sizes) = p.expect_key("layer_sizes")?;
        let sizes = parse_all::<usize>(line_no, sizes)?;
        if sizes.len() != 3 {
            return Err(NetworkError::Parse {
                line: line_no,
                message: "layer_sizes needs exactly three counts".into(),
            });
        }
        let layers = LayerSizes::new(sizes[0], sizes[1], sizes[2])?;

        let (line_no, priors) = p.expect_key("rf_priors")?;
        let rf_priors = parse_all::<f64>(line_no, priors)?;
        let (line_no, leaks) = p.expect_key("disease_leaks")?;
        let disease_leaks = parse_all::<f64>(line_no, leaks)?;

        let disease_parents = read_edges(&mut p, "disease_edges", layers.diseases)?;
        let (line_no, leaks) = p.expect_key("symptom_leaks")?;
        let symptom_leaks = parse_all::<f64>(line_no, leaks)?;
        let symptom_parents = read_edges(&mut p, "symptom_edges", layers.symptoms)?;

        NoisyOrNetwork::new(
            layers,
            rf_priors,
            disease_leaks,
            disease_parents,
            symptom_leaks,
            symptom_parents,
            seed,
        )
    }

    pub fn save(&self, path: &Path) -> Result<(), NetworkError> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NetworkError> {
        let text = fs::read_to_string(path)?;
        Self::from_text(&text)
    }
}
