//! The type lattice of the IR and its byte-level data layout.
//!
//! Aggregates are referenced by name; their field lists live in the owning
//! [`Module`](super::Module)'s declaration table. Layout uses a fixed 8-byte
//! pointer width and natural alignment `min(size, 8)` for scalars. Arrays take
//! the alignment of their element, aggregates the maximum of their fields.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const POINTER_SIZE: u64 = 8;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Type {
    Int { bits: u16, signed: bool },
    Float { bits: u16 },
    Char,
    Void,
    Pointer(Box<Type>),
    Array(Box<Type>, u64),
    Function(Vec<Type>, Box<Type>),
    Struct(String),
    Union(String),
}

impl Type {
    pub fn int(bits: u16, signed: bool) -> Type {
        Type::Int { bits, signed }
    }

    pub fn i32() -> Type {
        Type::int(32, true)
    }

    pub fn i64() -> Type {
        Type::int(64, true)
    }

    pub fn u64() -> Type {
        Type::int(64, false)
    }

    pub fn ptr(pointee: Type) -> Type {
        Type::Pointer(Box::new(pointee))
    }

    pub fn array(elem: Type, len: u64) -> Type {
        Type::Array(Box::new(elem), len)
    }

    pub fn is_pointer(&self) -> bool {
        matches!(self, Type::Pointer(_))
    }

    pub fn pointee(&self) -> Option<&Type> {
        match self {
            Type::Pointer(t) => Some(t),
            _ => None,
        }
    }

    pub fn is_aggregate(&self) -> bool {
        matches!(self, Type::Struct(_) | Type::Union(_))
    }

    pub fn aggregate_name(&self) -> Option<&str> {
        match self {
            Type::Struct(n) | Type::Union(n) => Some(n),
            _ => None,
        }
    }

    /// `int`, `float`, `char`, `void`, or a pointer to one of these (possibly
    /// through further pointers).
    pub fn is_prim(&self) -> bool {
        match self {
            Type::Int { .. } | Type::Float { .. } | Type::Char | Type::Void => true,
            Type::Pointer(inner) => inner.is_prim(),
            _ => false,
        }
    }

    pub fn is_prim_pointer(&self) -> bool {
        self.is_pointer() && self.is_prim()
    }

    /// `char*` or `void*`: regions whose extent is found with `strlen`.
    pub fn is_string_pointer(&self) -> bool {
        matches!(self.pointee(), Some(Type::Char) | Some(Type::Void))
    }

    pub fn is_integer(&self) -> bool {
        matches!(self, Type::Int { .. } | Type::Char)
    }

    /// Scalars are the only types a temporary can hold.
    pub fn is_scalar(&self) -> bool {
        matches!(
            self,
            Type::Int { .. } | Type::Float { .. } | Type::Char | Type::Pointer(_)
        )
    }

    pub fn is_signed(&self) -> bool {
        matches!(self, Type::Int { signed: true, .. })
    }

    pub fn contains_function(&self) -> bool {
        match self {
            Type::Function(..) => true,
            Type::Pointer(t) | Type::Array(t, _) => t.contains_function(),
            _ => false,
        }
    }

    /// Type equality with all pointer types identified (opaque pointers).
    pub fn compatible(&self, other: &Type) -> bool {
        match (self, other) {
            (Type::Pointer(_), Type::Pointer(_)) => true,
            _ => self == other,
        }
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Int { bits, signed } => write!(f, "{}{}", if *signed { 'i' } else { 'u' }, bits),
            Type::Float { bits } => write!(f, "f{bits}"),
            Type::Char => f.write_str("char"),
            Type::Void => f.write_str("void"),
            Type::Pointer(t) => write!(f, "ptr({t})"),
            Type::Array(t, n) => write!(f, "[{n} x {t}]"),
            Type::Function(params, ret) => {
                f.write_str("fn(")?;
                for (i, p) in params.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{p}")?;
                }
                write!(f, ")->{ret}")
            }
            Type::Struct(n) | Type::Union(n) => write!(f, "%{n}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AggregateKind {
    Struct,
    Union,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Field {
    pub name: String,
    pub ty: Type,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AggregateDecl {
    pub name: String,
    pub kind: AggregateKind,
    pub fields: Vec<Field>,
}

impl AggregateDecl {
    pub fn as_type(&self) -> Type {
        match self.kind {
            AggregateKind::Struct => Type::Struct(self.name.clone()),
            AggregateKind::Union => Type::Union(self.name.clone()),
        }
    }

    pub fn field(&self, name: &str) -> Option<(usize, &Field)> {
        self.fields.iter().enumerate().find(|(_, f)| f.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LayoutError {
    #[error("type `{0}` has no size")]
    Unsized(String),
    #[error("unknown aggregate `%{0}`")]
    UnknownAggregate(String),
    #[error("aggregate `%{0}` has no field `{1}`")]
    UnknownField(String, String),
    #[error("recursive aggregate `%{0}` without pointer indirection")]
    Recursive(String),
}

/// Resolves aggregate names to declarations.
pub trait AggregateTable {
    fn aggregate(&self, name: &str) -> Option<&AggregateDecl>;
}

impl AggregateTable for [AggregateDecl] {
    fn aggregate(&self, name: &str) -> Option<&AggregateDecl> {
        self.iter().find(|d| d.name == name)
    }
}

impl AggregateTable for Vec<AggregateDecl> {
    fn aggregate(&self, name: &str) -> Option<&AggregateDecl> {
        self.as_slice().aggregate(name)
    }
}

/// Size and alignment computation over an aggregate table.
pub struct Layout<'a, T: AggregateTable + ?Sized> {
    table: &'a T,
}

impl<'a, T: AggregateTable + ?Sized> Layout<'a, T> {
    pub fn new(table: &'a T) -> Self {
        Layout { table }
    }

    pub fn size_of(&self, ty: &Type) -> Result<u64, LayoutError> {
        self.size_align(ty, &mut Vec::new()).map(|(s, _)| s)
    }

    pub fn align_of(&self, ty: &Type) -> Result<u64, LayoutError> {
        self.size_align(ty, &mut Vec::new()).map(|(_, a)| a)
    }

    fn size_align(&self, ty: &Type, stack: &mut Vec<String>) -> Result<(u64, u64), LayoutError> {
        match ty {
            Type::Int { bits, .. } | Type::Float { bits } => {
                let s = u64::from(*bits) / 8;
                Ok((s, s.min(8)))
            }
            Type::Char => Ok((1, 1)),
            Type::Pointer(_) => Ok((POINTER_SIZE, POINTER_SIZE)),
            Type::Void | Type::Function(..) => Err(LayoutError::Unsized(ty.to_string())),
            Type::Array(elem, n) => {
                let (s, a) = self.size_align(elem, stack)?;
                Ok((s * n, a))
            }
            Type::Struct(name) | Type::Union(name) => {
                if stack.iter().any(|n| n == name) {
                    return Err(LayoutError::Recursive(name.clone()));
                }
                let decl = self
                    .table
                    .aggregate(name)
                    .ok_or_else(|| LayoutError::UnknownAggregate(name.clone()))?;
                stack.push(name.clone());
                let mut size = 0u64;
                let mut align = 1u64;
                for f in &decl.fields {
                    let (fs, fa) = self.size_align(&f.ty, stack)?;
                    align = align.max(fa);
                    match decl.kind {
                        AggregateKind::Struct => size = round_up(size, fa) + fs,
                        AggregateKind::Union => size = size.max(fs),
                    }
                }
                stack.pop();
                Ok((round_up(size, align), align))
            }
        }
    }

    pub fn field_offset(&self, aggregate: &str, field: &str) -> Result<u64, LayoutError> {
        let decl = self
            .table
            .aggregate(aggregate)
            .ok_or_else(|| LayoutError::UnknownAggregate(aggregate.to_string()))?;
        let (idx, _) = decl
            .field(field)
            .ok_or_else(|| LayoutError::UnknownField(aggregate.into(), field.into()))?;
        self.field_offset_by_index(aggregate, idx)
    }

    pub fn field_offset_by_index(&self, aggregate: &str, index: usize) -> Result<u64, LayoutError> {
        let decl = self
            .table
            .aggregate(aggregate)
            .ok_or_else(|| LayoutError::UnknownAggregate(aggregate.to_string()))?;
        if index >= decl.fields.len() {
            return Err(LayoutError::UnknownField(aggregate.into(), index.to_string()));
        }
        if decl.kind == AggregateKind::Union {
            return Ok(0);
        }
        let mut off = 0u64;
        for (i, f) in decl.fields.iter().enumerate() {
            let (fs, fa) = self.size_align(&f.ty, &mut vec![aggregate.to_string()])?;
            off = round_up(off, fa);
            if i == index {
                return Ok(off);
            }
            off += fs;
        }
        unreachable!("index checked above")
    }

    /// Follows a field-name path from `ty`, returning the byte offset and the
    /// type reached. Array-typed intermediate steps are not traversed.
    pub fn resolve_path(&self, ty: &Type, path: &[String]) -> Result<(u64, Type), LayoutError> {
        let mut off = 0;
        let mut cur = ty.clone();
        for name in path {
            let agg = cur
                .aggregate_name()
                .ok_or_else(|| LayoutError::UnknownField(cur.to_string(), name.clone()))?
                .to_string();
            off += self.field_offset(&agg, name)?;
            let decl = self.table.aggregate(&agg).expect("checked by field_offset");
            cur = decl.field(name).expect("checked by field_offset").1.ty.clone();
        }
        Ok((off, cur))
    }
}

fn round_up(v: u64, align: u64) -> u64 {
    if align <= 1 {
        v
    } else {
        v.div_ceil(align) * align
    }
}
