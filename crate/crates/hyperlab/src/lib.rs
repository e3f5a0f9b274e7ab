pub mod foliation;
pub mod geodesic;
pub mod kgflat;
pub mod mass;
pub mod metric;
pub mod nullgeom;
pub mod ode;
pub mod quadrature;
pub mod tensor;
pub mod zscompare;

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/metric.md")]
    mod metric {}
    #[doc = include_str!("../../../book/src/hyperboloids.md")]
    mod hyperboloids {}
    #[doc = include_str!("../../../book/src/null_geometry.md")]
    mod null_geometry {}
    #[doc = include_str!("../../../book/src/schwarzschild_zone.md")]
    mod schwarzschild_zone {}
    #[doc = include_str!("../../../book/src/mass.md")]
    mod mass {}
    #[doc = include_str!("../../../book/src/klein_gordon.md")]
    mod klein_gordon {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
