//! Plain-text parameter files.
//!
//! ```text
//! densenet 1
//! dims 5 128 2
//! hidden tanh
//! head softmax
//! params 898
//! <one f64 per line, 898 lines>
//! ```
//!
//! Values are written with Rust's shortest round-trip float formatting, so a
//! save/load cycle is bit-exact. An optimizer block may follow:
//!
//! ```text
//! adam 1
//! config <lr> <beta1> <beta2> <eps>
//! step <t>
//! m <n>
//! <n lines>
//! v <n>
//! <n lines>
//! ```

use std::io::{BufRead, Write};

use super::{Activation, Adam, AdamConfig, DenseNet, Head};
use crate::error::{Error, Result};

pub(crate) struct LineReader<'a, R: BufRead> {
    inner: &'a mut R,
    line: u64,
    buf: String,
}

impl<'a, R: BufRead> LineReader<'a, R> {
    pub(crate) fn new(inner: &'a mut R) -> Self {
        Self {
            inner,
            line: 0,
            buf: String::new(),
        }
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            message: message.into(),
        }
    }

    pub(crate) fn next_line(&mut self) -> Result<&str> {
        self.buf.clear();
        self.line += 1;
        let n = self
            .inner
            .read_line(&mut self.buf)
            .map_err(|e| self.err(e.to_string()))?;
        if n == 0 {
            return Err(self.err("unexpected end of file"));
        }
        Ok(self.buf.trim_end())
    }

    /// Reads a line of the form `<key> <fields...>` and returns the fields.
    pub(crate) fn keyed(&mut self, key: &str) -> Result<Vec<String>> {
        let line = self.next_line()?.to_owned();
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some(k) if k == key => Ok(parts.map(str::to_owned).collect()),
            other => Err(self.err(format!("expected `{key}`, found {other:?}"))),
        }
    }

    pub(crate) fn parse<T: std::str::FromStr>(&self, field: &str) -> Result<T> {
        field
            .parse()
            .map_err(|_| self.err(format!("cannot parse `{field}`")))
    }

    fn values(&mut self, count: usize) -> Result<Vec<f64>> {
        (0..count)
            .map(|_| {
                let line = self.next_line()?.to_owned();
                self.parse(&line)
            })
            .collect()
    }

    fn single<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let fields = self.keyed(key)?;
        match fields.as_slice() {
            [one] => self.parse(one),
            _ => Err(self.err(format!("`{key}` takes exactly one value"))),
        }
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::Io {
        path: "<stream>".into(),
        source: e,
    }
}

pub fn write_net<W: Write>(net: &DenseNet, out: &mut W) -> Result<()> {
    let dims: Vec<String> = net.dims().iter().map(|d| d.to_string()).collect();
    writeln!(out, "densenet 1").map_err(io_err)?;
    writeln!(out, "dims {}", dims.join(" ")).map_err(io_err)?;
    writeln!(out, "hidden {}", net.hidden_activation().name()).map_err(io_err)?;
    writeln!(out, "head {}", net.head().name()).map_err(io_err)?;
    writeln!(out, "params {}", net.param_count()).map_err(io_err)?;
    for p in net.params() {
        writeln!(out, "{p}").map_err(io_err)?;
    }
    Ok(())
}

pub fn read_net<R: BufRead>(input: &mut R) -> Result<DenseNet> {
    read_net_from(&mut LineReader::new(input))
}

pub(crate) fn read_net_from<R: BufRead>(lines: &mut LineReader<'_, R>) -> Result<DenseNet> {
    let version: u32 = lines.single("densenet")?;
    if version != 1 {
        return Err(lines.err(format!("unsupported densenet version {version}")));
    }
    let dims = lines
        .keyed("dims")?
        .iter()
        .map(|d| lines.parse::<usize>(d))
        .collect::<Result<Vec<_>>>()?;
    let hidden = match lines.single::<String>("hidden")?.as_str() {
        "tanh" => Activation::Tanh,
        "relu" => Activation::Relu,
        other => return Err(lines.err(format!("unknown activation `{other}`"))),
    };
    let head = match lines.single::<String>("head")?.as_str() {
        "identity" => Head::Identity,
        "softmax" => Head::Softmax,
        other => return Err(lines.err(format!("unknown head `{other}`"))),
    };
    let mut net = DenseNet::zeros(&dims, hidden, head)?;
    let count: usize = lines.single("params")?;
    if count != net.param_count() {
        return Err(lines.err(format!(
            "params header says {count}, dims imply {}",
            net.param_count()
        )));
    }
    let values = lines.values(count)?;
    net.set_params(&values)?;
    Ok(net)
}

pub(crate) fn write_adam<W: Write>(adam: &Adam, out: &mut W) -> Result<()> {
    let c = adam.config;
    writeln!(out, "adam 1").map_err(io_err)?;
    writeln!(out, "config {} {} {} {}", c.lr, c.beta1, c.beta2, c.eps).map_err(io_err)?;
    writeln!(out, "step {}", adam.t).map_err(io_err)?;
    for (key, values) in [("m", &adam.m), ("v", &adam.v)] {
        writeln!(out, "{key} {}", values.len()).map_err(io_err)?;
        for x in values {
            writeln!(out, "{x}").map_err(io_err)?;
        }
    }
    Ok(())
}

pub(crate) fn read_adam_from<R: BufRead>(lines: &mut LineReader<'_, R>) -> Result<Adam> {
    let version: u32 = lines.single("adam")?;
    if version != 1 {
        return Err(lines.err(format!("unsupported adam version {version}")));
    }
    let fields = lines.keyed("config")?;
    let parsed = fields
        .iter()
        .map(|f| lines.parse::<f64>(f))
        .collect::<Result<Vec<_>>>()?;
    let [lr, beta1, beta2, eps] = parsed[..] else {
        return Err(lines.err("adam config takes four values"));
    };
    let t: u64 = lines.single("step")?;
    let m_len: usize = lines.single("m")?;
    let m = lines.values(m_len)?;
    let v_len: usize = lines.single("v")?;
    let v = lines.values(v_len)?;
    if m_len != v_len {
        return Err(lines.err("adam moment lengths differ"));
    }
    Ok(Adam {
        config: AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        },
        m,
        v,
        t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::GradientTape;

    #[test]
    fn net_roundtrip_is_bit_exact() {
        let net = DenseNet::seeded(&[5, 7, 2], Activation::Tanh, Head::Softmax, 99).unwrap();
        let mut buf = Vec::new();
        write_net(&net, &mut buf).unwrap();
        let back = read_net(&mut buf.as_slice()).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn adam_roundtrip() {
        let mut net = DenseNet::seeded(&[2, 3, 1], Activation::Relu, Head::Identity, 1).unwrap();
        let mut adam = Adam::for_net(&net, AdamConfig::default());
        let tape = GradientTape::from_vec((0..net.param_count()).map(|i| i as f64 * 0.1).collect());
        adam.step(&mut net, &tape).unwrap();
        let mut buf = Vec::new();
        write_adam(&adam, &mut buf).unwrap();
        let back = read_adam_from(&mut LineReader::new(&mut buf.as_slice())).unwrap();
        assert_eq!(back, adam);
    }

    #[test]
    fn truncated_file_reports_line() {
        let text = "densenet 1\ndims 1 1\nhidden tanh\nhead identity\nparams 2\n0.5\n";
        let err = read_net(&mut text.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 7, .. }), "{err}");
    }

    #[test]
    fn shape_mismatch_rejected() {
        let text = "densenet 1\ndims 1 1\nhidden tanh\nhead identity\nparams 3\n0\n0\n0\n";
        assert!(read_net(&mut text.as_bytes()).is_err());
    }
}
