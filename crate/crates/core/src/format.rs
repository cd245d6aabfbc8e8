//! Binary files for datasets (`FTPD`) and parameter vectors (`FTPW`).
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! FTPD  magic "FTPD" | version u16 | C u32 | K_c u32 | T_obs u32 | T_pre u32
//!       C x { client_id u32 | regime u8 (0 = A, 1 = B)
//!             K_c x { scenario_id u64 | m u16 | target_index u16
//!                     m x { T_obs x (x f64, y f64) | T_pre x (x f64, y f64) } } }
//!
//! FTPW  magic "FTPW" | version u16 | T_obs u32 | T_pre u32 | F u32 | H u32
//!       layout-total x f64
//! ```
//!
//! Files are written to a sibling temporary path and renamed into place.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::predictor::{ModelDims, ParamVector};
use crate::scenario::{AgentTrack, ClientDataset, Point, Regime, Scenario};

pub const DATASET_MAGIC: &[u8; 4] = b"FTPD";
pub const PARAMS_MAGIC: &[u8; 4] = b"FTPW";
pub const DATASET_VERSION: u16 = 1;
pub const PARAMS_VERSION: u16 = 1;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn fail<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            offset: self.pos as u64,
            message: message.into(),
        })
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return self.fail(format!(
                "unexpected end of file reading {what} ({n} bytes needed, {} left)",
                self.buf.len() - self.pos
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn point(&mut self) -> Result<Point> {
        Ok([self.f64("x coordinate")?, self.f64("y coordinate")?])
    }

    fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let m = self.take(4, "magic")?;
        if m != expected {
            self.pos -= 4;
            return self.fail(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(m),
                String::from_utf8_lossy(expected)
            ));
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return self.fail(format!("{} trailing bytes", self.buf.len() - self.pos));
        }
        Ok(())
    }
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::validation(format!("{what} {v} does not fit in u32")))
}

fn to_u16(v: usize, what: &str) -> Result<u16> {
    u16::try_from(v).map_err(|_| Error::validation(format!("{what} {v} does not fit in u16")))
}

/// Shared dimensions of a dataset list, checked for consistency.
fn dataset_shape(datasets: &[ClientDataset]) -> Result<(usize, usize, usize)> {
    let first = datasets
        .first()
        .ok_or_else(|| Error::validation("cannot store an empty client list"))?;
    let k = first.len();
    let agent = first
        .scenarios
        .first()
        .and_then(|s| s.agents.first())
        .ok_or_else(|| Error::validation("first client holds no agents"))?;
    let (t_obs, t_pre) = (agent.observed.len(), agent.future.len());
    for d in datasets {
        if d.len() != k {
            return Err(Error::validation(format!(
                "client {} holds {} scenarios, the file format needs {k} for every client",
                d.client_id,
                d.len()
            )));
        }
        d.validate(t_obs, t_pre)?;
    }
    Ok((k, t_obs, t_pre))
}

pub fn encode_dataset(datasets: &[ClientDataset]) -> Result<Vec<u8>> {
    let (k, t_obs, t_pre) = dataset_shape(datasets)?;
    let mut out = Vec::new();
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    for (v, what) in [
        (datasets.len(), "client count"),
        (k, "scenarios per client"),
        (t_obs, "t_obs"),
        (t_pre, "t_pre"),
    ] {
        out.extend_from_slice(&to_u32(v, what)?.to_le_bytes());
    }
    for d in datasets {
        out.extend_from_slice(&to_u32(d.client_id, "client id")?.to_le_bytes());
        out.push(match d.regime {
            Regime::A => 0,
            Regime::B => 1,
        });
        for s in &d.scenarios {
            out.extend_from_slice(&s.scenario_id.to_le_bytes());
            out.extend_from_slice(&to_u16(s.agents.len(), "agent count")?.to_le_bytes());
            out.extend_from_slice(&to_u16(s.target_index, "target index")?.to_le_bytes());
            for a in &s.agents {
                for p in a.observed.iter().chain(&a.future) {
                    out.extend_from_slice(&p[0].to_le_bytes());
                    out.extend_from_slice(&p[1].to_le_bytes());
                }
            }
        }
    }
    Ok(out)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Vec<ClientDataset>> {
    let mut r = Reader::new(bytes);
    r.magic(DATASET_MAGIC)?;
    let version = r.u16("version")?;
    if version != DATASET_VERSION {
        return Err(Error::Version {
            format: "FTPD",
            found: version,
            expected: DATASET_VERSION,
        });
    }
    let c = r.u32("client count")? as usize;
    let k = r.u32("scenarios per client")? as usize;
    let t_obs = r.u32("t_obs")? as usize;
    let t_pre = r.u32("t_pre")? as usize;
    if c == 0 || k == 0 {
        return r.fail("header declares an empty dataset");
    }
    let mut datasets = Vec::with_capacity(c.min(1 << 16));
    for _ in 0..c {
        let client_id = r.u32("client id")? as usize;
        let regime = match r.u8("regime")? {
            0 => Regime::A,
            1 => Regime::B,
            other => {
                r.pos -= 1;
                return r.fail(format!("unknown regime tag {other}"));
            }
        };
        let mut scenarios = Vec::with_capacity(k.min(1 << 16));
        for _ in 0..k {
            let scenario_id = r.u64("scenario id")?;
            let m = r.u16("agent count")? as usize;
            let target_index = r.u16("target index")? as usize;
            if m == 0 || target_index >= m {
                return r.fail(format!(
                    "scenario {scenario_id}: target index {target_index} invalid for {m} agents"
                ));
            }
            let mut agents = Vec::with_capacity(m);
            for _ in 0..m {
                let observed = (0..t_obs).map(|_| r.point()).collect::<Result<Vec<_>>>()?;
                let future = (0..t_pre).map(|_| r.point()).collect::<Result<Vec<_>>>()?;
                agents.push(AgentTrack { observed, future });
            }
            scenarios.push(Scenario {
                scenario_id,
                agents,
                target_index,
            });
        }
        datasets.push(ClientDataset {
            client_id,
            scenarios,
            regime,
        });
    }
    r.finish()?;
    for d in &datasets {
        d.validate(t_obs, t_pre)?;
    }
    Ok(datasets)
}

pub fn encode_params(params: &ParamVector) -> Result<Vec<u8>> {
    let d = params.dims;
    let expected = d.layout().total;
    if params.len() != expected {
        return Err(Error::DimensionMismatch {
            what: "parameter vector length",
            expected,
            found: params.len(),
        });
    }
    let mut out = Vec::with_capacity(22 + 8 * params.len());
    out.extend_from_slice(PARAMS_MAGIC);
    out.extend_from_slice(&PARAMS_VERSION.to_le_bytes());
    for (v, what) in [(d.t_obs, "t_obs"), (d.t_pre, "t_pre"), (d.modes, "modes"), (d.hidden, "hidden")] {
        out.extend_from_slice(&to_u32(v, what)?.to_le_bytes());
    }
    for v in &params.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_params(bytes: &[u8]) -> Result<ParamVector> {
    let mut r = Reader::new(bytes);
    r.magic(PARAMS_MAGIC)?;
    let version = r.u16("version")?;
    if version != PARAMS_VERSION {
        return Err(Error::Version {
            format: "FTPW",
            found: version,
            expected: PARAMS_VERSION,
        });
    }
    let dims = ModelDims {
        t_obs: r.u32("t_obs")? as usize,
        t_pre: r.u32("t_pre")? as usize,
        modes: r.u32("modes")? as usize,
        hidden: r.u32("hidden")? as usize,
    };
    if let Err(e) = dims.validate() {
        return r.fail(format!("invalid model dimensions: {e}"));
    }
    let n = dims.layout().total;
    let remaining = bytes.len() - r.pos;
    if remaining != 8 * n {
        return r.fail(format!(
            "payload holds {remaining} bytes, dimensions require {}",
            8 * n
        ));
    }
    let values = (0..n).map(|_| r.f64("parameter")).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    ParamVector::from_values(dims, values)
}

/// Writes `bytes` to a temporary sibling of `path`, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn save_dataset(datasets: &[ClientDataset], path: &Path) -> Result<()> {
    write_atomic(path, &encode_dataset(datasets)?)
}

pub fn load_dataset(path: &Path) -> Result<Vec<ClientDataset>> {
    decode_dataset(&fs::read(path)?)
}

pub fn save_params(params: &ParamVector, path: &Path) -> Result<()> {
    write_atomic(path, &encode_params(params)?)
}

pub fn load_params(path: &Path) -> Result<ParamVector> {
    decode_params(&fs::read(path)?)
}
