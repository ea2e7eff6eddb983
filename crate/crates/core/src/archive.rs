//! Flat binary weight files.
//!
//! Layout (all header lines are UTF-8, `\n`-terminated):
//!
//! ```text
//! LEADERGEO-WEIGHTS 1
//! kind <encoder|regressor>
//! config <key>=<value>        (zero or more)
//! tensor <name> <d0>x<d1>...  (one per tensor, in data order)
//! end
//! <payload>
//! ```
//!
//! The payload is every tensor's elements back to back, row-major, each a
//! little-endian IEEE-754 `f32`. Element counts follow from the shapes, so
//! the payload length is exactly `4 · Σ Π dims` bytes.

use std::io::{BufRead, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &str = "LEADERGEO-WEIGHTS 1";

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            shape,
            data,
        }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TensorArchive {
    pub kind: String,
    pub config: Vec<(String, String)>,
    pub tensors: Vec<Tensor>,
}

impl TensorArchive {
    pub fn new(kind: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            ..Default::default()
        }
    }

    pub fn config_value(&self, key: &str) -> Option<&str> {
        self.config.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::ShapeMismatch(format!("missing tensor `{name}`")))
    }

    pub fn write_to(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "{MAGIC}")?;
        writeln!(out, "kind {}", self.kind)?;
        for (k, v) in &self.config {
            writeln!(out, "config {k}={v}")?;
        }
        for t in &self.tensors {
            let dims: Vec<String> = t.shape.iter().map(usize::to_string).collect();
            writeln!(out, "tensor {} {}", t.name, dims.join("x"))?;
        }
        writeln!(out, "end")?;
        for t in &self.tensors {
            for &v in &t.data {
                out.write_all(&(v as f32).to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from(input: impl Read) -> Result<Self> {
        let mut reader = std::io::BufReader::new(input);
        let mut line = String::new();
        let mut line_no = 0usize;
        let mut next_line = |reader: &mut std::io::BufReader<_>, line: &mut String| -> Result<usize> {
            line.clear();
            line_no += 1;
            let n = reader
                .read_line(line)
                .map_err(|e| Error::parse(line_no, e.to_string()))?;
            if n == 0 {
                return Err(Error::parse(line_no, "unexpected end of header"));
            }
            while line.ends_with('\n') || line.ends_with('\r') {
                line.pop();
            }
            Ok(line_no)
        };

        let n = next_line(&mut reader, &mut line)?;
        if line != MAGIC {
            return Err(Error::parse(n, "not a weights file"));
        }
        let n = next_line(&mut reader, &mut line)?;
        let kind = line
            .strip_prefix("kind ")
            .ok_or_else(|| Error::parse(n, "expected `kind`"))?
            .to_string();
        let mut archive = TensorArchive::new(kind);
        let mut shapes = Vec::new();
        loop {
            let n = next_line(&mut reader, &mut line)?;
            if line == "end" {
                break;
            } else if let Some(rest) = line.strip_prefix("config ") {
                let (k, v) = rest
                    .split_once('=')
                    .ok_or_else(|| Error::parse(n, "config line needs key=value"))?;
                archive.config.push((k.to_string(), v.to_string()));
            } else if let Some(rest) = line.strip_prefix("tensor ") {
                let (name, dims) = rest
                    .split_once(' ')
                    .ok_or_else(|| Error::parse(n, "tensor line needs a name and shape"))?;
                let shape = dims
                    .split('x')
                    .map(|d| d.parse::<usize>().map_err(|e| Error::parse(n, e.to_string())))
                    .collect::<Result<Vec<_>>>()?;
                shapes.push((name.to_string(), shape));
            } else {
                return Err(Error::parse(n, format!("unrecognized header line `{line}`")));
            }
        }
        let mut bytes = [0u8; 4];
        for (name, shape) in shapes {
            let numel: usize = shape.iter().product();
            let mut data = Vec::with_capacity(numel);
            for _ in 0..numel {
                reader
                    .read_exact(&mut bytes)
                    .map_err(|_| Error::parse(0, format!("payload truncated in `{name}`")))?;
                data.push(f32::from_le_bytes(bytes) as f64);
            }
            archive.tensors.push(Tensor { name, shape, data });
        }
        let mut rest = Vec::new();
        reader
            .read_to_end(&mut rest)
            .map_err(|e| Error::parse(0, e.to_string()))?;
        if !rest.is_empty() {
            return Err(Error::parse(0, format!("{} trailing payload bytes", rest.len())));
        }
        Ok(archive)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(file)
    }
}
