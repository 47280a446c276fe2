//! Trained encoder pairs on disk.
//!
//! Layout (little-endian): magic `RISVICK1`, version, estimator kind, the
//! scenario as JSON, seed, pilot plan, then for each of encoder F and G its
//! architecture (input, hidden widths, keep probability, heads), parameters,
//! batch-norm running statistics and Adam moments, and finally the learning
//! rate and step count. Equal models give equal bytes.

use std::path::Path;

use crate::channel::SystemConfig;
use crate::codec::{Decoder, Encoder as Writer};
use crate::encoder::{AdamState, Architecture, Encoder, HeadSpec};
use crate::error::{Error, Result};
use crate::inference::{EncoderPair, EstimatorKind};
use crate::signal::PilotPlan;

const MAGIC: &[u8; 8] = b"RISVICK1";
const VERSION: u32 = 1;

fn put_head(w: &mut Writer, h: &HeadSpec) {
    let (code, out, c) = match *h {
        HeadSpec::MeanTanh { out, scale } => (0, out, scale),
        HeadSpec::ScaleSoftmax { out, budget } => (1, out, budget),
        HeadSpec::ShapeSigmoid { out, span } => (2, out, span),
    };
    w.u8(code);
    w.usize(out);
    w.f64(c);
}

fn get_head(d: &mut Decoder) -> Result<HeadSpec> {
    let code = d.u8()?;
    let out = d.usize()?;
    let c = d.f64()?;
    Ok(match code {
        0 => HeadSpec::MeanTanh { out, scale: c },
        1 => HeadSpec::ScaleSoftmax { out, budget: c },
        2 => HeadSpec::ShapeSigmoid { out, span: c },
        _ => return Err(Error::Format(format!("unknown head code {code}"))),
    })
}

fn put_encoder(w: &mut Writer, enc: &Encoder, adam: &AdamState) {
    let a = &enc.arch;
    w.usize(a.input);
    w.usize(a.hidden.len());
    for &h in &a.hidden {
        w.usize(h);
    }
    w.f64(a.keep);
    w.usize(a.heads.len());
    for h in &a.heads {
        put_head(w, h);
    }
    w.f64s(&enc.params);
    w.f64s(&enc.running);
    w.f64s(&adam.m);
    w.f64s(&adam.v);
    w.u64(adam.t);
}

fn get_encoder(d: &mut Decoder) -> Result<(Encoder, AdamState)> {
    let input = d.usize()?;
    let layers = d.usize()?;
    if layers > 64 {
        return Err(Error::Format(format!("{layers} hidden layers")));
    }
    let hidden = (0..layers).map(|_| d.usize()).collect::<Result<Vec<_>>>()?;
    let keep = d.f64()?;
    let nheads = d.usize()?;
    if nheads > 16 {
        return Err(Error::Format(format!("{nheads} heads")));
    }
    let heads = (0..nheads).map(|_| get_head(d)).collect::<Result<Vec<_>>>()?;
    let arch = Architecture { input, hidden, heads, keep };
    arch.validate().map_err(|e| Error::Format(e.to_string()))?;
    let params = d.f64s()?;
    let running = d.f64s()?;
    let enc = Encoder::from_parts(arch, params, running).map_err(|e| Error::Format(e.to_string()))?;
    let m = d.f64s()?;
    let v = d.f64s()?;
    let t = d.u64()?;
    if m.len() != enc.params.len() || v.len() != enc.params.len() {
        return Err(Error::Format("optimizer state does not match the parameters".into()));
    }
    Ok((enc, AdamState { m, v, t }))
}

pub fn to_bytes(pair: &EncoderPair) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(MAGIC);
    w.u32(VERSION);
    w.u8(pair.kind.code());
    w.str(&serde_json::to_string(&pair.cfg).expect("config serializes"));
    w.u64(pair.seed);
    w.matrix(&pair.plan.phi);
    w.c64s(&pair.plan.x);
    put_encoder(&mut w, &pair.enc_f, &pair.adam_f);
    put_encoder(&mut w, &pair.enc_g, &pair.adam_g);
    w.f64(pair.lr);
    w.usize(pair.step);
    w.into_bytes()
}

pub fn from_bytes(bytes: &[u8]) -> Result<EncoderPair> {
    let mut d = Decoder::new(bytes);
    d.expect(MAGIC)?;
    let version = d.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("checkpoint version {version}, expected {VERSION}")));
    }
    let kind = EstimatorKind::from_code(d.u8()?)?;
    let cfg: SystemConfig =
        serde_json::from_str(&d.str()?).map_err(|e| Error::Format(format!("scenario header: {e}")))?;
    let seed = d.u64()?;
    let plan = PilotPlan::from_parts(d.matrix()?, d.c64s()?).map_err(|e| Error::Format(e.to_string()))?;
    let (enc_f, adam_f) = get_encoder(&mut d)?;
    let (enc_g, adam_g) = get_encoder(&mut d)?;
    let lr = d.f64()?;
    let step = d.usize()?;
    if !d.is_empty() {
        return Err(Error::Format("trailing bytes after the checkpoint".into()));
    }
    let pair = EncoderPair { kind, cfg, seed, plan, enc_f, enc_g, adam_f, adam_g, lr, step };
    pair.check_shapes().map_err(|e| Error::Format(e.to_string()))?;
    Ok(pair)
}

pub fn write(pair: &EncoderPair, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(pair))?;
    Ok(())
}

/// A missing file is a [`Error::MissingArtifact`].
pub fn read(path: &Path) -> Result<EncoderPair> {
    let bytes = std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(format!("checkpoint {}", path.display())),
        _ => Error::Io(e),
    })?;
    from_bytes(&bytes)
}
