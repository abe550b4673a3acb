//! Binary model files.
//!
//! Layout (all integers `u64` and floats `f64`, little-endian): the 8-byte
//! magic `SBTREES1`, a `u32` format version, the configuration as
//! length-prefixed `key=value` text, the feature names, the quantile map,
//! the response transform, the optional grouping, the diagnostics and finally
//! the draws.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::config::FitConfig;
use crate::data::ResponseTransform;
use crate::ensemble::Ensemble;
use crate::error::{Result, SbartError};
use crate::inference::FittedModel;
use crate::preprocess::{ColumnMap, QuantileMap};
use crate::priors::GroupStructure;
use crate::trace::{ChainDiagnostics, PosteriorDraw, Trace};
use crate::tree::{Node, NodeKind, SoftTree};

pub const MAGIC: &[u8; 8] = b"SBTREES1";
pub const FORMAT_VERSION: u32 = 1;

type LE = LittleEndian;

// Guards against absurd lengths in corrupt files before allocating.
const MAX_LEN: u64 = 1 << 40;

fn put_len<W: Write>(w: &mut W, n: usize) -> Result<()> {
    w.write_u64::<LE>(n as u64)?;
    Ok(())
}

fn put_f64s<W: Write>(w: &mut W, v: &[f64]) -> Result<()> {
    put_len(w, v.len())?;
    for &x in v {
        w.write_f64::<LE>(x)?;
    }
    Ok(())
}

fn get_len<R: Read>(r: &mut R) -> Result<usize> {
    let n = r.read_u64::<LE>()?;
    if n > MAX_LEN {
        return Err(SbartError::Format(format!("implausible length {n}")));
    }
    Ok(n as usize)
}

fn get_f64s<R: Read>(r: &mut R) -> Result<Vec<f64>> {
    let n = get_len(r)?;
    (0..n).map(|_| Ok(r.read_f64::<LE>()?)).collect()
}

fn put_opt_f64s<W: Write>(w: &mut W, v: Option<&[f64]>) -> Result<()> {
    match v {
        Some(v) => {
            w.write_u8(1)?;
            put_f64s(w, v)
        }
        None => Ok(w.write_u8(0)?),
    }
}

fn get_opt_f64s<R: Read>(r: &mut R) -> Result<Option<Vec<f64>>> {
    match r.read_u8()? {
        0 => Ok(None),
        1 => Ok(Some(get_f64s(r)?)),
        t => Err(SbartError::Format(format!("bad option tag {t}"))),
    }
}

fn write_tree<W: Write>(w: &mut W, tree: &SoftTree) -> Result<()> {
    w.write_f64::<LE>(tree.bandwidth())?;
    put_len(w, tree.nodes().len())?;
    for node in tree.nodes() {
        w.write_u32::<LE>(node.depth)?;
        w.write_i64::<LE>(node.parent.map_or(-1, |p| p as i64))?;
        match node.kind {
            NodeKind::Leaf { mu } => {
                w.write_u8(0)?;
                w.write_f64::<LE>(mu)?;
            }
            NodeKind::Branch {
                predictor,
                cutpoint,
                left,
                right,
            } => {
                w.write_u8(1)?;
                w.write_u64::<LE>(predictor as u64)?;
                w.write_f64::<LE>(cutpoint)?;
                w.write_u64::<LE>(left as u64)?;
                w.write_u64::<LE>(right as u64)?;
            }
        }
    }
    Ok(())
}

fn read_tree<R: Read>(r: &mut R, p: usize) -> Result<SoftTree> {
    let bandwidth = r.read_f64::<LE>()?;
    let n = get_len(r)?;
    let mut nodes = Vec::with_capacity(n.min(1 << 16));
    for _ in 0..n {
        let depth = r.read_u32::<LE>()?;
        let parent = match r.read_i64::<LE>()? {
            -1 => None,
            v if v >= 0 => Some(v as usize),
            v => return Err(SbartError::Format(format!("bad parent id {v}"))),
        };
        let kind = match r.read_u8()? {
            0 => NodeKind::Leaf { mu: r.read_f64::<LE>()? },
            1 => NodeKind::Branch {
                predictor: r.read_u64::<LE>()? as usize,
                cutpoint: r.read_f64::<LE>()?,
                left: r.read_u64::<LE>()? as usize,
                right: r.read_u64::<LE>()? as usize,
            },
            t => return Err(SbartError::Format(format!("bad node tag {t}"))),
        };
        nodes.push(Node { kind, depth, parent });
    }
    SoftTree::from_nodes(nodes, bandwidth, p)
}

fn write_ensemble<W: Write>(w: &mut W, e: &Ensemble) -> Result<()> {
    for v in [e.sigma, e.sigma_mu, e.a] {
        w.write_f64::<LE>(v)?;
    }
    put_f64s(w, e.s())?;
    put_f64s(w, e.log_s())?;
    put_opt_f64s(w, e.group_u.as_deref())?;
    put_opt_f64s(w, e.group_log_u())?;
    put_len(w, e.trees.len())?;
    for t in &e.trees {
        write_tree(w, t)?;
    }
    Ok(())
}

fn read_ensemble<R: Read>(r: &mut R) -> Result<Ensemble> {
    let sigma = r.read_f64::<LE>()?;
    let sigma_mu = r.read_f64::<LE>()?;
    let a = r.read_f64::<LE>()?;
    let s = get_f64s(r)?;
    let log_s = get_f64s(r)?;
    let group_u = get_opt_f64s(r)?;
    let group_log_u = get_opt_f64s(r)?;
    let t = get_len(r)?;
    let trees = (0..t).map(|_| read_tree(r, s.len())).collect::<Result<Vec<_>>>()?;
    Ensemble::from_parts(trees, s, log_s, sigma, sigma_mu, a, group_u, group_log_u)
}

fn write_diagnostics<W: Write>(w: &mut W, d: &ChainDiagnostics) -> Result<()> {
    for v in [
        d.tree_proposals,
        d.tree_accepts,
        d.birth.0,
        d.birth.1,
        d.death.0,
        d.death.1,
        d.change.0,
        d.change.1,
        d.bandwidth_proposals,
        d.bandwidth_accepts,
    ] {
        w.write_u64::<LE>(v)?;
    }
    Ok(())
}

fn read_diagnostics<R: Read>(r: &mut R) -> Result<ChainDiagnostics> {
    let mut v = [0u64; 10];
    for x in &mut v {
        *x = r.read_u64::<LE>()?;
    }
    Ok(ChainDiagnostics {
        tree_proposals: v[0],
        tree_accepts: v[1],
        birth: (v[2], v[3]),
        death: (v[4], v[5]),
        change: (v[6], v[7]),
        bandwidth_proposals: v[8],
        bandwidth_accepts: v[9],
    })
}

/// Serializes a fitted model.
pub fn write_model<W: Write>(model: &FittedModel, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LE>(FORMAT_VERSION)?;
    let config = model.config.to_key_values();
    put_len(&mut w, config.len())?;
    w.write_all(config.as_bytes())?;
    put_len(&mut w, model.feature_names.len())?;
    for name in &model.feature_names {
        put_len(&mut w, name.len())?;
        w.write_all(name.as_bytes())?;
    }

    put_len(&mut w, model.quantile_map.columns.len())?;
    for c in &model.quantile_map.columns {
        put_f64s(&mut w, &c.values)?;
        put_f64s(&mut w, &c.ranks)?;
    }
    w.write_f64::<LE>(model.transform.scale)?;
    w.write_f64::<LE>(model.transform.offset)?;
    match &model.groups {
        Some(g) => {
            w.write_u8(1)?;
            put_len(&mut w, g.assignment().len())?;
            for &a in g.assignment() {
                w.write_u64::<LE>(a as u64)?;
            }
        }
        None => w.write_u8(0)?,
    }

    write_diagnostics(&mut w, &model.trace.diagnostics)?;
    put_len(&mut w, model.trace.draws.len())?;
    for d in &model.trace.draws {
        w.write_f64::<LE>(d.log_likelihood)?;
        write_ensemble(&mut w, &d.ensemble)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a model written by [`write_model`].
pub fn read_model<R: Read>(mut r: R) -> Result<FittedModel> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| SbartError::Format("file too short for a model header".into()))?;
    if &magic != MAGIC {
        return Err(SbartError::Format("not a model file (bad magic)".into()));
    }
    let version = r.read_u32::<LE>()?;
    if version != FORMAT_VERSION {
        return Err(SbartError::Format(format!("unsupported format version {version}")));
    }
    let n = get_len(&mut r)?;
    let mut text = vec![0u8; n];
    r.read_exact(&mut text)?;
    let text = String::from_utf8(text).map_err(|_| SbartError::Format("config is not UTF-8".into()))?;
    let mut config = FitConfig::default();
    config.apply_key_values(&text)?;
    let names = get_len(&mut r)?;
    let feature_names = (0..names)
        .map(|_| {
            let mut buf = vec![0u8; get_len(&mut r)?];
            r.read_exact(&mut buf)?;
            String::from_utf8(buf).map_err(|_| SbartError::Format("feature name is not UTF-8".into()))
        })
        .collect::<Result<Vec<_>>>()?;

    let p = get_len(&mut r)?;
    if p != feature_names.len() {
        return Err(SbartError::Format("feature names disagree with the quantile map".into()));
    }
    let mut columns = Vec::with_capacity(p.min(1 << 16));
    for _ in 0..p {
        let values = get_f64s(&mut r)?;
        let ranks = get_f64s(&mut r)?;
        if values.len() != ranks.len() {
            return Err(SbartError::Format("quantile map columns are ragged".into()));
        }
        columns.push(ColumnMap { values, ranks });
    }
    let transform = ResponseTransform {
        scale: r.read_f64::<LE>()?,
        offset: r.read_f64::<LE>()?,
    };
    let groups = match r.read_u8()? {
        0 => None,
        1 => {
            let m = get_len(&mut r)?;
            let assignment = (0..m)
                .map(|_| Ok(r.read_u64::<LE>()? as usize))
                .collect::<Result<Vec<_>>>()?;
            Some(GroupStructure::new(assignment)?)
        }
        t => return Err(SbartError::Format(format!("bad grouping tag {t}"))),
    };

    let diagnostics = read_diagnostics(&mut r)?;
    let d = get_len(&mut r)?;
    let mut draws = Vec::with_capacity(d.min(1 << 16));
    for _ in 0..d {
        let ll = r.read_f64::<LE>()?;
        let ensemble = read_ensemble(&mut r)?;
        if ensemble.num_predictors() != p {
            return Err(SbartError::Format("draw predictor count disagrees with the quantile map".into()));
        }
        draws.push(PosteriorDraw::new(ensemble, ll));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(SbartError::Format("trailing bytes after the last draw".into()));
    }
    Ok(FittedModel {
        config,
        quantile_map: QuantileMap { columns },
        transform,
        groups,
        feature_names,
        trace: Trace { draws, diagnostics },
    })
}

pub fn save_model(model: &FittedModel, path: &Path) -> Result<()> {
    write_model(model, BufWriter::new(File::create(path)?))
}

pub fn load_model(path: &Path) -> Result<FittedModel> {
    read_model(BufReader::new(File::open(path)?))
}
