#![allow(dead_code)]

use proptest::prelude::*;
use trichotomy_core::genlab::{Block, CentralPattern, GeneratorSpec, RateBindings, Role};
use trichotomy_core::rates::RateSpec;

pub fn rate_spec() -> impl Strategy<Value = RateSpec> {
    prop_oneof![
        (1.2f64..3.0).prop_map(|lambda| RateSpec::Exp { lambda }),
        (0.5f64..2.0).prop_map(|p| RateSpec::Poly { p }),
    ]
}

/// Block-diagonal specs of dimension at most `max_dim` per role.
pub fn generator_spec(horizon: usize, max_dim: usize) -> impl Strategy<Value = GeneratorSpec> {
    (
        (0..=max_dim, 0..=max_dim, 0..=max_dim).prop_filter("nonempty", |(s, u, c)| s + u + c > 0),
        rate_spec(),
        rate_spec(),
        0.2f64..1.5,
        0.0f64..1.5,
        prop::bool::ANY,
        prop::option::of(any::<u64>()),
    )
        .prop_map(move |((s, u, c), h, k, a, b, alternating, rotation)| GeneratorSpec {
            horizon,
            blocks: [(Role::Stable, s), (Role::Unstable, u), (Role::Central, c)]
                .into_iter()
                .filter(|(_, dim)| *dim > 0)
                .map(|(role, dim)| Block { role, dim })
                .collect(),
            rates: RateBindings {
                h,
                k,
                mu: RateSpec::Poly { p: 1.0 },
                nu: RateSpec::Poly { p: 1.0 },
            },
            a,
            b,
            eps: 0.0,
            central: if alternating { CentralPattern::Alternating } else { CentralPattern::Identity },
            nonuniform: None,
            rotation,
            corruption: None,
        })
}
