//! Checkpoint container: a line-oriented text header followed by the raw
//! parameter payload.
//!
//! ```text
//! QWNN 1
//! meta <key> <value>            zero or more, value runs to end of line
//! layer <kind> [key=value ...]  one per layer, in order
//! param <name> trainable=<0|1> shape=<d0>x<d1>...
//! end
//! <f64 little-endian payload, params in header order>
//! ```

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{NnError, Result};
use crate::layer::{Conv2d, Layer};
use crate::network::{Network, Param};
use crate::tensor::Tensor;

const MAGIC: &str = "QWNN 1";

/// A network plus free-form string metadata (class names, normalization).
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: Network,
    pub meta: BTreeMap<String, String>,
}

fn bad(msg: impl Into<String>) -> NnError {
    NnError::Checkpoint(msg.into())
}

fn pair(v: (usize, usize)) -> String {
    format!("{}x{}", v.0, v.1)
}

fn layer_line(layer: &Layer) -> String {
    match *layer {
        Layer::Conv2d(c) => format!(
            "conv2d in={} out={} kernel={} stride={} padding={}",
            c.in_channels,
            c.out_channels,
            pair(c.kernel),
            pair(c.stride),
            pair(c.padding)
        ),
        Layer::MaxPool2d { kernel } => format!("maxpool2d kernel={}", pair(kernel)),
        Layer::Dense { inputs, outputs } => format!("dense in={inputs} out={outputs}"),
        Layer::Upsample2d { scale_h, scale_w } => {
            format!("upsample2d scale_h={scale_h:?} scale_w={scale_w:?}")
        }
        Layer::Relu | Layer::Sigmoid | Layer::AvgPoolGlobal => layer.kind().to_string(),
    }
}

fn parse_layer(rest: &str) -> Result<Layer> {
    let mut parts = rest.split_whitespace();
    let kind = parts.next().ok_or_else(|| bad("empty layer line"))?;
    let kv: BTreeMap<&str, &str> = parts.filter_map(|p| p.split_once('=')).collect();
    let get = |k: &str| kv.get(k).copied().ok_or_else(|| bad(format!("{kind}: missing {k}")));
    let num = |k: &str| -> Result<usize> {
        get(k)?.parse().map_err(|_| bad(format!("{kind}: bad {k}")))
    };
    let two = |k: &str| -> Result<(usize, usize)> {
        let (a, b) = get(k)?.split_once('x').ok_or_else(|| bad(format!("{kind}: bad {k}")))?;
        Ok((
            a.parse().map_err(|_| bad(format!("{kind}: bad {k}")))?,
            b.parse().map_err(|_| bad(format!("{kind}: bad {k}")))?,
        ))
    };
    let float = |k: &str| -> Result<f64> {
        get(k)?.parse().map_err(|_| bad(format!("{kind}: bad {k}")))
    };
    let layer = match kind {
        "conv2d" => Layer::Conv2d(Conv2d {
            in_channels: num("in")?,
            out_channels: num("out")?,
            kernel: two("kernel")?,
            stride: two("stride")?,
            padding: two("padding")?,
        }),
        "relu" => Layer::Relu,
        "sigmoid" => Layer::Sigmoid,
        "avgpool_global" => Layer::AvgPoolGlobal,
        "maxpool2d" => Layer::MaxPool2d {
            kernel: two("kernel")?,
        },
        "dense" => Layer::Dense {
            inputs: num("in")?,
            outputs: num("out")?,
        },
        "upsample2d" => Layer::Upsample2d {
            scale_h: float("scale_h")?,
            scale_w: float("scale_w")?,
        },
        other => return Err(bad(format!("unknown layer kind {other:?}"))),
    };
    layer.validate()?;
    Ok(layer)
}

impl Checkpoint {
    pub fn new(network: Network) -> Self {
        Self {
            network,
            meta: BTreeMap::new(),
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = String::new();
        header.push_str(MAGIC);
        header.push('\n');
        for (k, v) in &self.meta {
            if k.contains(char::is_whitespace) || v.contains('\n') {
                return Err(bad(format!("metadata {k:?} cannot be encoded")));
            }
            header.push_str(&format!("meta {k} {v}\n"));
        }
        for layer in self.network.layers() {
            header.push_str(&format!("layer {}\n", layer_line(layer)));
        }
        for p in self.network.params() {
            let shape: Vec<String> = p.tensor.shape().iter().map(usize::to_string).collect();
            header.push_str(&format!(
                "param {} trainable={} shape={}\n",
                p.name,
                u8::from(p.trainable),
                shape.join("x")
            ));
        }
        header.push_str("end\n");
        w.write_all(header.as_bytes())?;
        for p in self.network.params() {
            for v in p.tensor.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        Ok(buf)
    }

    pub fn read_from<R: BufRead>(mut r: R) -> Result<Self> {
        let mut line = String::new();
        let next_line = |r: &mut R, line: &mut String| -> Result<()> {
            line.clear();
            if r.read_line(line)? == 0 {
                return Err(bad("unexpected end of header"));
            }
            Ok(())
        };
        next_line(&mut r, &mut line)?;
        if line.trim_end() != MAGIC {
            return Err(bad("not a checkpoint (bad magic)"));
        }
        let mut meta = BTreeMap::new();
        let mut layers = Vec::new();
        let mut specs: Vec<(String, bool, Vec<usize>)> = Vec::new();
        loop {
            next_line(&mut r, &mut line)?;
            let l = line.trim_end_matches('\n');
            if l == "end" {
                break;
            }
            let (tag, rest) = l.split_once(' ').ok_or_else(|| bad(format!("bad line {l:?}")))?;
            match tag {
                "meta" => {
                    let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                    meta.insert(k.to_string(), v.to_string());
                }
                "layer" => layers.push(parse_layer(rest)?),
                "param" => {
                    let mut parts = rest.split_whitespace();
                    let name = parts.next().ok_or_else(|| bad("param without name"))?;
                    let mut trainable = None;
                    let mut shape = None;
                    for p in parts {
                        match p.split_once('=') {
                            Some(("trainable", v)) => trainable = Some(v == "1"),
                            Some(("shape", v)) => {
                                shape = Some(
                                    v.split('x')
                                        .map(|d| d.parse::<usize>())
                                        .collect::<std::result::Result<Vec<_>, _>>()
                                        .map_err(|_| bad(format!("{name}: bad shape")))?,
                                )
                            }
                            _ => return Err(bad(format!("{name}: unexpected field {p:?}"))),
                        }
                    }
                    specs.push((
                        name.to_string(),
                        trainable.ok_or_else(|| bad(format!("{name}: missing trainable")))?,
                        shape.ok_or_else(|| bad(format!("{name}: missing shape")))?,
                    ));
                }
                other => return Err(bad(format!("unknown header tag {other:?}"))),
            }
        }
        let mut params = Vec::with_capacity(specs.len());
        let mut buf = [0u8; 8];
        for (name, trainable, shape) in specs {
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                r.read_exact(&mut buf)
                    .map_err(|_| bad(format!("payload truncated in {name}")))?;
                data.push(f64::from_le_bytes(buf));
            }
            params.push(Param {
                name,
                tensor: Tensor::new(shape, data)?,
                trainable,
            });
        }
        if r.read(&mut buf)? != 0 {
            return Err(bad("trailing bytes after payload"));
        }
        Ok(Self {
            network: Network::from_parts(layers, params)?,
            meta,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(f))
    }
}
