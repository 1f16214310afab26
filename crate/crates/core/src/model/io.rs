//! Versioned plain-text model format.
//!
//! ```text
//! c2ae-model 1
//! loss_mode c2ae
//! dims <d> <l> <m>
//! alpha <real>
//! lambda <real>
//! whitening sum|mean
//! slope <real>
//! threshold <real>|none
//! network fx <layers>
//! layer <out> <in> linear|leaky <slope>
//! w <in reals>        (one line per output row)
//! b <out reals>
//! ...
//! network fe <layers>  (c2ae mode only)
//! network fd <layers>
//! end
//! ```
//!
//! Reals are written with 17 significant digits, which round-trips every
//! `f64` exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{C2AEModel, LossMode};
use crate::error::{Error, Result};
use crate::losses::Whitening;
use crate::nn::{Activation, DenseLayer, Matrix, Network};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "c2ae-model";

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_network(out: &mut String, name: &str, net: &Network) {
    writeln!(out, "network {name} {}", net.layers().len()).unwrap();
    for layer in net.layers() {
        let act = match layer.activation() {
            Activation::Linear => "linear".to_string(),
            Activation::LeakyRelu { slope } => format!("leaky {}", real(slope)),
        };
        writeln!(out, "layer {} {} {act}", layer.out_dim(), layer.in_dim()).unwrap();
        let w = layer.weight();
        for r in 0..w.rows() {
            out.push('w');
            for &v in w.row(r) {
                out.push(' ');
                out.push_str(&real(v));
            }
            out.push('\n');
        }
        out.push('b');
        for &v in layer.bias() {
            out.push(' ');
            out.push_str(&real(v));
        }
        out.push('\n');
    }
}

impl C2AEModel {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{MAGIC} {FORMAT_VERSION}").unwrap();
        writeln!(out, "loss_mode {}", self.mode).unwrap();
        writeln!(
            out,
            "dims {} {} {}",
            self.n_features(),
            self.latent_dim(),
            self.n_labels()
        )
        .unwrap();
        writeln!(out, "alpha {}", real(self.alpha)).unwrap();
        writeln!(out, "lambda {}", real(self.lambda)).unwrap();
        let whitening = match self.whitening {
            Whitening::Sum => "sum",
            Whitening::Mean => "mean",
        };
        writeln!(out, "whitening {whitening}").unwrap();
        writeln!(out, "slope {}", real(self.slope)).unwrap();
        match self.threshold {
            Some(t) => writeln!(out, "threshold {}", real(t)).unwrap(),
            None => writeln!(out, "threshold none").unwrap(),
        }
        write_network(&mut out, "fx", &self.fx);
        if let Some(fe) = &self.fe {
            write_network(&mut out, "fe", fe);
        }
        write_network(&mut out, "fd", &self.fd);
        out.push_str("end\n");
        out
    }

    pub fn from_text(text: &str, origin: &Path) -> Result<Self> {
        Reader::new(text, origin).model()
    }
}

pub fn save_model(model: &C2AEModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model.to_text()).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<C2AEModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    C2AEModel::from_text(&text, path)
}

struct Reader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    origin: &'a Path,
    line_no: usize,
}

impl<'a> Reader<'a> {
    fn new(text: &'a str, origin: &'a Path) -> Self {
        Reader {
            lines: text.lines().enumerate(),
            origin,
            line_no: 0,
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.origin.to_path_buf(),
            line: self.line_no,
            msg: msg.into(),
        }
    }

    /// Next line, split into its keyword and remaining tokens.
    fn next(&mut self, keyword: &str) -> Result<Vec<&'a str>> {
        let (k, line) = self
            .lines
            .next()
            .ok_or_else(|| self.err(format!("unexpected end of file, expected `{keyword}`")))?;
        self.line_no = k + 1;
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some(t) if t == keyword => Ok(toks.collect()),
            other => Err(self.err(format!("expected `{keyword}`, found {other:?}"))),
        }
    }

    fn one(&mut self, keyword: &str) -> Result<&'a str> {
        let toks = self.next(keyword)?;
        match toks[..] {
            [t] => Ok(t),
            _ => Err(self.err(format!("`{keyword}` takes one value"))),
        }
    }

    fn real_field(&mut self, keyword: &str) -> Result<f64> {
        let tok = self.one(keyword)?;
        self.real(tok)
    }

    fn real(&self, tok: &str) -> Result<f64> {
        let v: f64 = tok
            .parse()
            .map_err(|_| self.err(format!("bad real {tok:?}")))?;
        if !v.is_finite() {
            return Err(self.err(format!("non-finite value {tok:?}")));
        }
        Ok(v)
    }

    fn count(&self, tok: &str) -> Result<usize> {
        tok.parse()
            .map_err(|_| self.err(format!("bad count {tok:?}")))
    }

    fn reals(&self, toks: &[&str], expected: usize) -> Result<Vec<f64>> {
        if toks.len() != expected {
            return Err(self.err(format!("expected {expected} values, found {}", toks.len())));
        }
        toks.iter().map(|t| self.real(t)).collect()
    }

    fn network(&mut self, name: &str) -> Result<Network> {
        let head = self.next("network")?;
        if head.len() != 2 || head[0] != name {
            return Err(self.err(format!("expected `network {name} <layers>`")));
        }
        let n_layers = self.count(head[1])?;
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let spec = self.next("layer")?;
            let (out_dim, in_dim, act) = match spec[..] {
                [o, i, "linear"] => (self.count(o)?, self.count(i)?, Activation::Linear),
                [o, i, "leaky", s] => (
                    self.count(o)?,
                    self.count(i)?,
                    Activation::LeakyRelu {
                        slope: self.real(s)?,
                    },
                ),
                _ => return Err(self.err("malformed layer header")),
            };
            let mut data = Vec::with_capacity(out_dim * in_dim);
            for _ in 0..out_dim {
                let row = self.next("w")?;
                data.extend(self.reals(&row, in_dim)?);
            }
            let bias_toks = self.next("b")?;
            let bias = self.reals(&bias_toks, out_dim)?;
            let weight = Matrix::from_vec(out_dim, in_dim, data)?;
            layers.push(DenseLayer::new(weight, bias, act).map_err(|e| self.err(e.to_string()))?);
        }
        Network::from_layers(layers).map_err(|e| self.err(e.to_string()))
    }

    fn model(mut self) -> Result<C2AEModel> {
        let head = self.next(MAGIC)?;
        match head[..] {
            [v] if v == FORMAT_VERSION.to_string() => {}
            [v] => return Err(Error::UnsupportedVersion(v.to_string())),
            _ => return Err(self.err("missing format version")),
        }
        let mode: LossMode = self.one("loss_mode")?.parse()?;
        let dims_toks = self.next("dims")?;
        let dims: Vec<usize> = dims_toks
            .iter()
            .map(|t| self.count(t))
            .collect::<Result<_>>()?;
        let [d, l, m] = dims[..] else {
            return Err(self.err("`dims` takes d l m"));
        };
        let alpha = self.real_field("alpha")?;
        let lambda = self.real_field("lambda")?;
        let whitening = match self.one("whitening")? {
            "sum" => Whitening::Sum,
            "mean" => Whitening::Mean,
            other => return Err(self.err(format!("unknown whitening {other:?}"))),
        };
        let slope = self.real_field("slope")?;
        let threshold = match self.one("threshold")? {
            "none" => None,
            t => Some(self.real(t)?),
        };
        let fx = self.network("fx")?;
        let fe = match mode {
            LossMode::C2ae => Some(self.network("fe")?),
            _ => None,
        };
        let fd = self.network("fd")?;
        self.next("end")?;

        let mut model = C2AEModel::from_parts(mode, fx, fe, fd, alpha, lambda)
            .map_err(|e| self.err(e.to_string()))?;
        if (model.n_features(), model.latent_dim(), model.n_labels()) != (d, l, m) {
            return Err(self.err(format!(
                "declared dims {d} {l} {m} disagree with the networks"
            )));
        }
        model.whitening = whitening;
        model.slope = slope;
        model.threshold = threshold;
        Ok(model)
    }
}
