use std::collections::{BTreeMap, BTreeSet};

use crate::ir::{AggregateDecl, Type};

pub type PrimTypeMap = BTreeMap<String, BTreeSet<Type>>;

/// Maps every aggregate to the primitive leaf types reachable through its
/// fields. Arrays flatten to their element type; pointers are leaves.
pub fn flatten_prim_types(decls: &[AggregateDecl]) -> PrimTypeMap {
    let mut map = PrimTypeMap::new();
    for d in decls {
        let mut types = BTreeSet::new();
        let mut visiting = vec![d.name.clone()];
        for f in &d.fields {
            collect(decls, &f.ty, &mut types, &mut visiting);
        }
        map.insert(d.name.clone(), types);
    }
    map
}

fn collect(decls: &[AggregateDecl], ty: &Type, out: &mut BTreeSet<Type>, visiting: &mut Vec<String>) {
    match ty {
        Type::Array(elem, _) => collect(decls, elem, out, visiting),
        Type::Struct(n) | Type::Union(n) => {
            if visiting.contains(n) {
                return;
            }
            let Some(d) = decls.iter().find(|d| &d.name == n) else { return };
            visiting.push(n.clone());
            for f in &d.fields {
                collect(decls, &f.ty, out, visiting);
            }
            visiting.pop();
        }
        Type::Function(..) => {}
        other => {
            out.insert(other.clone());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_module;

    #[test]
    fn nested_and_arrays() {
        let m = parse_module(
            "struct %B { f32 x }\nstruct %A { %B b, char c }\nstruct %student { [8 x char] id, i32 score }",
        )
        .unwrap();
        let map = flatten_prim_types(&m.aggregates);
        assert_eq!(map["A"], BTreeSet::from([Type::Float { bits: 32 }, Type::Char]));
        assert_eq!(map["student"], BTreeSet::from([Type::Char, Type::i32()]));
    }
}
