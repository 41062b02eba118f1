//! Random concrete inputs for a function's parameters.

use rand::Rng;
use thiserror::Error;

use crate::ir::{AggregateTable, Function, Module, Type};
use crate::tracker::{Machine, Value};

/// Capacity of every generated string buffer: the longest string plus NUL.
pub const STRING_CAP: u64 = 33;
pub const MAX_STRING_LEN: u64 = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InputError {
    #[error("parameter {index} of `@{function}` has type {ty}, which inputs cannot be generated for")]
    Unsupported { function: String, index: usize, ty: String },
    #[error("no function `@{0}`")]
    UnknownFunction(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParamShape {
    Scalar(Type),
    /// `char*`/`void*`: a NUL-terminated buffer of `STRING_CAP` bytes.
    String,
    /// Pointer to a fixed-size object.
    Region(Type),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParamValue {
    Scalar(u64),
    /// String contents without the terminator.
    String(Vec<u8>),
    Region(Vec<u8>),
}

/// A parameter after materialization: its argument value and, for
/// pointers, the address and tainted extent of the object behind it.
#[derive(Debug, Clone)]
pub struct Placed {
    pub value: Value,
    pub region: Option<(u64, u64)>,
    /// Bytes allocated for the object.
    pub capacity: u64,
}

pub fn shapes(m: &Module, f: &Function) -> Result<Vec<ParamShape>, InputError> {
    f.params
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let bad = || InputError::Unsupported { function: f.name.clone(), index: i, ty: p.ty.to_string() };
            if p.ty.is_string_pointer() {
                return Ok(ParamShape::String);
            }
            match &p.ty {
                Type::Pointer(t) if generable(m, t) => Ok(ParamShape::Region((**t).clone())),
                Type::Int { .. } | Type::Char | Type::Float { .. } => Ok(ParamShape::Scalar(p.ty.clone())),
                _ => Err(bad()),
            }
        })
        .collect()
}

fn generable(m: &Module, t: &Type) -> bool {
    match t {
        Type::Int { .. } | Type::Char | Type::Float { .. } => true,
        Type::Array(e, _) => generable(m, e),
        Type::Struct(n) | Type::Union(n) => {
            m.aggregate(n).is_some_and(|d| d.fields.iter().all(|f| generable(m, &f.ty) || f.ty.is_pointer()))
        }
        _ => false,
    }
}

fn printable(rng: &mut impl Rng) -> u8 {
    rng.random_range(0x20..=0x7e)
}

fn scalar(rng: &mut impl Rng, ty: &Type) -> u64 {
    match ty {
        Type::Char => printable(rng) as u64,
        Type::Float { bits: 32 } => (rng.random_range(-1.0e3f32..1.0e3)).to_bits() as u64,
        Type::Float { .. } => rng.random_range(-1.0e3f64..1.0e3).to_bits(),
        Type::Int { bits, .. } if *bits < 64 => rng.random::<u64>() & ((1u64 << bits) - 1),
        _ => rng.random(),
    }
}

fn fill(m: &Module, rng: &mut impl Rng, ty: &Type, out: &mut [u8]) {
    let layout = m.layout();
    match ty {
        Type::Array(e, n) if **e == Type::Char => {
            let len = rng.random_range(0..*n) as usize;
            for b in out.iter_mut().take(len) {
                *b = printable(rng);
            }
        }
        Type::Array(e, n) => {
            let sz = layout.size_of(e).unwrap_or(0) as usize;
            for k in 0..*n as usize {
                fill(m, rng, e, &mut out[k * sz..(k + 1) * sz]);
            }
        }
        Type::Struct(name) | Type::Union(name) => {
            let Some(d) = m.aggregate(name) else { return };
            for (i, f) in d.fields.iter().enumerate() {
                if matches!(ty, Type::Union(_)) && i > 0 {
                    break;
                }
                let off = layout.field_offset_by_index(name, i).unwrap_or(0) as usize;
                let sz = layout.size_of(&f.ty).unwrap_or(0) as usize;
                fill(m, rng, &f.ty, &mut out[off..off + sz]);
            }
        }
        Type::Pointer(_) => out.fill(0),
        t => {
            let v = scalar(rng, t);
            let n = out.len();
            out.copy_from_slice(&v.to_le_bytes()[..n]);
        }
    }
}

pub fn gen_param(m: &Module, rng: &mut impl Rng, shape: &ParamShape) -> ParamValue {
    match shape {
        ParamShape::Scalar(t) => ParamValue::Scalar(scalar(rng, t)),
        ParamShape::String => {
            let len = rng.random_range(1..=MAX_STRING_LEN);
            ParamValue::String((0..len).map(|_| printable(rng)).collect())
        }
        ParamShape::Region(t) => {
            let mut b = vec![0; m.size_of(t).unwrap_or(0) as usize];
            fill(m, rng, t, &mut b);
            ParamValue::Region(b)
        }
    }
}

/// Unsigned 64-bit scalars of functions taking buffers act as sizes.
fn is_size(shapes: &[ParamShape], i: usize) -> bool {
    matches!(shapes[i], ParamShape::Scalar(Type::Int { bits: 64, signed: false }))
        && shapes.contains(&ParamShape::String)
}

/// Draws a size bounded by the shortest string buffer, terminator
/// included, so copies stay within the string extents.
fn gen_size(rng: &mut impl Rng, vals: &[ParamValue]) -> u64 {
    let min = vals
        .iter()
        .filter_map(|v| match v {
            ParamValue::String(s) => Some(s.len() as u64 + 1),
            _ => None,
        })
        .min()
        .unwrap_or(0);
    rng.random_range(0..=min)
}

pub fn gen_inputs(m: &Module, rng: &mut impl Rng, shapes: &[ParamShape]) -> Vec<ParamValue> {
    let mut vals: Vec<ParamValue> = shapes.iter().map(|s| gen_param(m, rng, s)).collect();
    for i in 0..shapes.len() {
        if is_size(shapes, i) {
            vals[i] = ParamValue::Scalar(gen_size(rng, &vals));
        }
    }
    vals
}

/// Redraws parameter `i`, keeping the size constraints of the others.
pub fn regen_param(m: &Module, rng: &mut impl Rng, shapes: &[ParamShape], vals: &[ParamValue], i: usize) -> ParamValue {
    if is_size(shapes, i) {
        ParamValue::Scalar(gen_size(rng, vals))
    } else {
        gen_param(m, rng, &shapes[i])
    }
}

/// Allocates and writes the objects behind pointer parameters.
pub fn place(mach: &mut Machine<'_>, shapes: &[ParamShape], vals: &[ParamValue]) -> Vec<Placed> {
    let m = mach.module();
    shapes
        .iter()
        .zip(vals)
        .map(|(s, v)| match (s, v) {
            (ParamShape::Scalar(t), ParamValue::Scalar(x)) => {
                Placed { value: Value::new(*x, m.size_of(t).unwrap_or(8) as usize), region: None, capacity: 0 }
            }
            (ParamShape::String, ParamValue::String(b)) => {
                let a = mach.alloc(STRING_CAP, 16).expect("heap has room");
                mach.write(a, b);
                Placed { value: Value::new(a, 8), region: Some((a, b.len() as u64 + 1)), capacity: STRING_CAP }
            }
            (ParamShape::Region(_), ParamValue::Region(b)) => {
                let a = mach.alloc(b.len() as u64, 16).expect("heap has room");
                mach.write(a, b);
                Placed { value: Value::new(a, 8), region: Some((a, b.len() as u64)), capacity: b.len() as u64 }
            }
            _ => panic!("input does not match its shape"),
        })
        .collect()
}
