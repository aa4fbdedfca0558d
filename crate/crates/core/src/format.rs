//! `BPN1` binary checkpoint format.
//!
//! Layout: magic `BPN1`, version u16, network class u8 (0 packed, 1 float),
//! input shape (3×u32), layer table (kind u8, kernel u32, stride u32,
//! size u32), λ f32, then per-layer payloads. Binarized weights are stored
//! as one contiguous LSB-first bitstream per layer in little-endian u64
//! words — no per-row padding, so a layer's weight bytes stay within a word
//! of bits/8. Thresholds are i32 (hidden layers) or f32 (first layer);
//! scalars are IEEE-754 little-endian.
//!
//! Everything operates on byte buffers; file IO lives in the CLI crate.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::compiled::{compile, CompiledLayer, CompiledNetwork, FORMAT_VERSION};
use crate::net::{
    BatchNorm, Direction, LayerKind, LayerParams, LayerSpec, NetworkParams, NetworkSpec,
};
use crate::tensor::PackedBitTensor;

pub const MAGIC: [u8; 4] = *b"BPN1";

const CLASS_PACKED: u8 = 0;
const CLASS_FLOAT: u8 = 1;

/// A deserialized checkpoint: either a deployment-form packed network or the
/// real-valued parameter set used by the float baseline.
#[derive(Debug, Clone, PartialEq)]
pub enum Checkpoint {
    Packed(CompiledNetwork),
    Float(NetworkParams),
}

impl Checkpoint {
    pub fn n_actions(&self) -> usize {
        match self {
            Checkpoint::Packed(n) => n.n_actions(),
            Checkpoint::Float(p) => p.spec.n_actions(),
        }
    }

    pub fn spec(&self) -> &NetworkSpec {
        match self {
            Checkpoint::Packed(n) => &n.spec,
            Checkpoint::Float(p) => &p.spec,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FormatError {
    BadMagic,
    UnsupportedVersion { found: u16 },
    Truncated,
    BadField(&'static str),
    BadSpec(String),
}

impl core::fmt::Display for FormatError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            FormatError::BadMagic => write!(f, "not a BPN1 checkpoint (bad magic)"),
            FormatError::UnsupportedVersion { found } => {
                write!(f, "incompatible format version {found} (supported: {FORMAT_VERSION})")
            }
            FormatError::Truncated => write!(f, "checkpoint truncated"),
            FormatError::BadField(what) => write!(f, "invalid field: {what}"),
            FormatError::BadSpec(s) => write!(f, "invalid network spec: {s}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for FormatError {}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Self { buf: Vec::new() }
    }
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn i32(&mut self, v: i32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        if self.pos + n > self.buf.len() {
            return Err(FormatError::Truncated);
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn i32(&mut self) -> Result<i32, FormatError> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f32(&mut self) -> Result<f32, FormatError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

fn kind_code(kind: LayerKind) -> u8 {
    match kind {
        LayerKind::ConvBinWeight => 0,
        LayerKind::ConvFullBin => 1,
        LayerKind::FcFullBin => 2,
        LayerKind::FcScaledOutput => 3,
    }
}

fn kind_from_code(code: u8) -> Result<LayerKind, FormatError> {
    Ok(match code {
        0 => LayerKind::ConvBinWeight,
        1 => LayerKind::ConvFullBin,
        2 => LayerKind::FcFullBin,
        3 => LayerKind::FcScaledOutput,
        _ => return Err(FormatError::BadField("layer kind")),
    })
}

fn write_header(w: &mut Writer, class: u8, spec: &NetworkSpec, lambda: f32) {
    w.buf.extend_from_slice(&MAGIC);
    w.u16(FORMAT_VERSION);
    w.u8(class);
    w.u32(spec.input.0 as u32);
    w.u32(spec.input.1 as u32);
    w.u32(spec.input.2 as u32);
    w.u8(spec.layers.len() as u8);
    for l in &spec.layers {
        w.u8(kind_code(l.kind));
        w.u32(l.kernel as u32);
        w.u32(l.stride as u32);
        w.u32(l.channels_or_nodes as u32);
    }
    w.f32(lambda);
}

fn read_header(r: &mut Reader) -> Result<(u8, NetworkSpec, f32), FormatError> {
    if r.take(4)? != MAGIC {
        return Err(FormatError::BadMagic);
    }
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(FormatError::UnsupportedVersion { found: version });
    }
    let class = r.u8()?;
    let input = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    let n_layers = r.u8()? as usize;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let kind = kind_from_code(r.u8()?)?;
        let kernel = r.u32()? as usize;
        let stride = r.u32()? as usize;
        let size = r.u32()? as usize;
        layers.push(LayerSpec { kind, kernel, stride, channels_or_nodes: size });
    }
    let spec = NetworkSpec::new(input, layers)
        .map_err(|e| FormatError::BadSpec(alloc::format!("{e}")))?;
    let lambda = r.f32()?;
    Ok((class, spec, lambda))
}

fn write_bits(w: &mut Writer, signs: &[i8]) {
    let packed = PackedBitTensor::pack_flat(signs);
    for &word in &packed.words {
        w.u64(word);
    }
}

fn read_bits(r: &mut Reader, count: usize) -> Result<Vec<i8>, FormatError> {
    let words = count.div_ceil(64);
    let mut t = PackedBitTensor { words: Vec::with_capacity(words), logical_len: count, shape: vec![count] };
    for _ in 0..words {
        t.words.push(r.u64()?);
    }
    if t.words.last().map(|w| w & !t.tail_mask()).unwrap_or(0) != 0 {
        return Err(FormatError::BadField("nonzero tail bits"));
    }
    Ok(t.unpack())
}

fn dir_code(d: Direction) -> u8 {
    match d {
        Direction::Geq => 0,
        Direction::Lt => 1,
    }
}

fn dir_from_code(c: u8) -> Result<Direction, FormatError> {
    Ok(match c {
        0 => Direction::Geq,
        1 => Direction::Lt,
        _ => return Err(FormatError::BadField("direction")),
    })
}

/// Serialize a compiled network.
pub fn encode_compiled(net: &CompiledNetwork) -> Vec<u8> {
    let mut w = Writer::new();
    write_header(&mut w, CLASS_PACKED, &net.spec, net.lambda);
    for layer in &net.layers {
        match layer {
            CompiledLayer::FirstConv { weights, fold, .. } => {
                write_bits(&mut w, weights);
                for &t in &fold.thresholds {
                    w.f32(t);
                }
                for &d in &fold.directions {
                    w.u8(dir_code(d));
                }
            }
            CompiledLayer::BinConv { weights, fold } | CompiledLayer::BinFc { weights, fold } => {
                write_bits(&mut w, &weights.unpack());
                for &t in &fold.thresholds {
                    w.i32(t);
                }
                for &d in &fold.directions {
                    w.u8(dir_code(d));
                }
            }
            CompiledLayer::OutFc { weights } => {
                write_bits(&mut w, &weights.unpack());
            }
        }
    }
    w.buf
}

/// Serialize the float baseline's parameter set.
pub fn encode_float(params: &NetworkParams) -> Vec<u8> {
    let mut w = Writer::new();
    write_header(&mut w, CLASS_FLOAT, &params.spec, params.lambda());
    for lp in &params.layers {
        for &v in &lp.weights {
            w.f32(v);
        }
        w.u8(lp.bn.is_some() as u8);
        if let Some(bn) = &lp.bn {
            for vs in [&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var] {
                for &v in vs.iter() {
                    w.f32(v);
                }
            }
            w.f32(bn.eps);
        }
    }
    w.buf
}

/// Decode any `BPN1` checkpoint.
pub fn decode(buf: &[u8]) -> Result<Checkpoint, FormatError> {
    let mut r = Reader::new(buf);
    let (class, spec, lambda) = read_header(&mut r)?;
    match class {
        CLASS_PACKED => decode_packed_body(&mut r, spec, lambda).map(Checkpoint::Packed),
        CLASS_FLOAT => decode_float_body(&mut r, spec, lambda).map(Checkpoint::Float),
        _ => Err(FormatError::BadField("network class")),
    }
}

fn decode_packed_body(
    r: &mut Reader,
    spec: NetworkSpec,
    lambda: f32,
) -> Result<CompiledNetwork, FormatError> {
    use crate::kernels::PackedMatrix;
    use crate::net::{FoldedActivation, FoldedActivationReal};
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(FormatError::BadField("lambda"));
    }
    let dims = spec.dims().map_err(|e| FormatError::BadSpec(alloc::format!("{e}")))?;
    let mut layers = Vec::with_capacity(dims.len());
    for (li, d) in dims.iter().enumerate() {
        let signs = read_bits(r, d.weight_count())?;
        match spec.layers[li].kind {
            LayerKind::ConvBinWeight => {
                let weights_i16: Vec<i16> = signs.iter().map(|&s| s as i16).collect();
                let mut thresholds = Vec::with_capacity(d.bn_units);
                for _ in 0..d.bn_units {
                    thresholds.push(r.f32()?);
                }
                let mut directions = Vec::with_capacity(d.bn_units);
                for _ in 0..d.bn_units {
                    directions.push(dir_from_code(r.u8()?)?);
                }
                layers.push(CompiledLayer::FirstConv {
                    weights: signs,
                    weights_i16,
                    fold: FoldedActivationReal { thresholds, directions },
                });
            }
            LayerKind::ConvFullBin | LayerKind::FcFullBin => {
                let weights = PackedMatrix::pack(&signs, d.out_size, d.row_len);
                let mut thresholds = Vec::with_capacity(d.bn_units);
                for _ in 0..d.bn_units {
                    thresholds.push(r.i32()?);
                }
                let mut directions = Vec::with_capacity(d.bn_units);
                for _ in 0..d.bn_units {
                    directions.push(dir_from_code(r.u8()?)?);
                }
                let fold = FoldedActivation { thresholds, directions };
                layers.push(if spec.layers[li].kind == LayerKind::ConvFullBin {
                    CompiledLayer::BinConv { weights, fold }
                } else {
                    CompiledLayer::BinFc { weights, fold }
                });
            }
            LayerKind::FcScaledOutput => {
                layers.push(CompiledLayer::OutFc {
                    weights: PackedMatrix::pack(&signs, d.out_size, d.row_len),
                });
            }
        }
    }
    Ok(CompiledNetwork { spec, layers, lambda, version: FORMAT_VERSION })
}

fn decode_float_body(
    r: &mut Reader,
    spec: NetworkSpec,
    lambda: f32,
) -> Result<NetworkParams, FormatError> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(FormatError::BadField("lambda"));
    }
    let dims = spec.dims().map_err(|e| FormatError::BadSpec(alloc::format!("{e}")))?;
    let mut layers = Vec::with_capacity(dims.len());
    for d in &dims {
        let mut weights = Vec::with_capacity(d.weight_count());
        for _ in 0..d.weight_count() {
            weights.push(r.f32()?);
        }
        let has_bn = r.u8()? != 0;
        let bn = if has_bn {
            let mut fields: [Vec<f32>; 4] = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
            for f in fields.iter_mut() {
                for _ in 0..d.bn_units {
                    f.push(r.f32()?);
                }
            }
            let [gamma, beta, running_mean, running_var] = fields;
            Some(BatchNorm { gamma, beta, running_mean, running_var, eps: r.f32()? })
        } else {
            None
        };
        layers.push(LayerParams { weights, bn });
    }
    Ok(NetworkParams { spec, layers, rho: libm::logf(lambda) })
}

/// Convenience: compile and serialize trained parameters in one step.
pub fn export_params(params: &NetworkParams) -> Result<Vec<u8>, crate::compiled::CompileError> {
    Ok(encode_compiled(&compile(params)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiled::compile;
    use crate::tensor::PixelTensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_params(spec: NetworkSpec, seed: u64) -> NetworkParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = NetworkParams::init(spec, &mut rng);
        for lp in p.layers.iter_mut() {
            if let Some(bn) = lp.bn.as_mut() {
                for u in 0..bn.gamma.len() {
                    bn.gamma[u] = rng.gen_range(0.1..2.0f32);
                    bn.beta[u] = rng.gen_range(-2.0..2.0f32);
                    bn.running_mean[u] = rng.gen_range(-10.0..10.0f32);
                    bn.running_var[u] = rng.gen_range(0.01..20.0f32);
                }
            }
        }
        p
    }

    #[test]
    fn packed_round_trip_preserves_inference() {
        let params = random_params(NetworkSpec::bpn((1, 84, 84), 33, 14), 42);
        let net = compile(&params).unwrap();
        let bytes = encode_compiled(&net);
        let Checkpoint::Packed(loaded) = decode(&bytes).unwrap() else {
            panic!("expected packed class");
        };
        assert_eq!(loaded, net);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5 {
            let obs = PixelTensor::new((0..84 * 84).map(|_| rng.gen()).collect(), vec![1, 84, 84]);
            assert_eq!(net.infer(&obs), loaded.infer(&obs));
        }
    }

    #[test]
    fn float_round_trip_is_exact() {
        let params = random_params(NetworkSpec::bpn((6, 84, 84), 10, 7), 43);
        let bytes = encode_float(&params);
        let Checkpoint::Float(loaded) = decode(&bytes).unwrap() else {
            panic!("expected float class");
        };
        assert_eq!(loaded.spec, params.spec);
        for (a, b) in loaded.layers.iter().zip(&params.layers) {
            assert_eq!(a.weights, b.weights);
            assert_eq!(a.bn, b.bn);
        }
        assert!((loaded.lambda() - params.lambda()).abs() < 1e-6);
    }

    #[test]
    fn encode_is_deterministic() {
        let params = random_params(NetworkSpec::bpn((1, 84, 84), 9, 14), 44);
        let net = compile(&params).unwrap();
        assert_eq!(encode_compiled(&net), encode_compiled(&net));
    }

    #[test]
    fn rejects_bad_magic_version_truncation() {
        let params = random_params(NetworkSpec::bpn((1, 84, 84), 9, 14), 45);
        let bytes = encode_compiled(&compile(&params).unwrap());

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert_eq!(decode(&bad).unwrap_err(), FormatError::BadMagic);

        let mut bad = bytes.clone();
        bad[4] = 99;
        assert_eq!(
            decode(&bad).unwrap_err(),
            FormatError::UnsupportedVersion { found: 99 }
        );

        assert_eq!(
            decode(&bytes[..bytes.len() - 3]).unwrap_err(),
            FormatError::Truncated
        );
    }

    #[test]
    fn binarized_layer_bytes_stay_near_bit_size() {
        // serialized weight bytes per layer ≤ bits/8 + one word of padding
        let params = random_params(NetworkSpec::bpn((1, 84, 84), 400, 14), 46);
        let net = compile(&params).unwrap();
        for (packed_bytes, float_bytes) in net.layer_weight_sizes() {
            let bits = float_bytes / 4;
            assert!(packed_bytes <= bits.div_ceil(8) + 8);
            if bits >= 512 {
                assert!(
                    (packed_bytes as f64) <= (float_bytes as f64) / 31.0,
                    "{packed_bytes} vs {float_bytes}"
                );
            }
        }
    }
}
