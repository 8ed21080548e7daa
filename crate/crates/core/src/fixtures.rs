//! Graphs shared by unit tests.

use crate::graph::{EdgeMark::*, Pag};

/// Session I1..I4 plus the recommendation (index 4):
/// I1 o-> I3 <-> I5 <-o I2 o-o I4.
pub(crate) fn search_radius_example() -> Pag {
    let mut g = Pag::with_nodes(5);
    g.add_edge(0, 2, Circle, Arrow).unwrap();
    g.add_edge(2, 4, Arrow, Arrow).unwrap();
    g.add_edge(1, 4, Circle, Arrow).unwrap();
    g.add_edge(1, 3, Circle, Circle).unwrap();
    g
}
