//! Bounding-volume hierarchy over mesh triangles.
//!
//! Each node carries a bounding sphere and a local axis-aligned box; the box
//! becomes an oriented box once the mesh is placed.

use nalgebra::Vector3;

const LEAF_SIZE: usize = 2;

#[derive(Clone, Debug)]
pub(crate) struct Node {
    pub center: Vector3<f64>,
    pub radius: f64,
    /// Centre and half extents of the local axis-aligned box.
    pub box_center: Vector3<f64>,
    pub half: Vector3<f64>,
    /// Children for inner nodes, `None` for leaves.
    pub children: Option<(u32, u32)>,
    /// Range into `Bvh::order` for leaves.
    pub start: u32,
    pub count: u32,
}

#[derive(Clone, Debug)]
pub(crate) struct Bvh {
    pub nodes: Vec<Node>,
    pub order: Vec<u32>,
}

impl Bvh {
    pub fn build(vertices: &[Vector3<f64>], faces: &[[u32; 3]]) -> Self {
        let centroids: Vec<Vector3<f64>> = faces
            .iter()
            .map(|f| f.iter().map(|&i| vertices[i as usize]).sum::<Vector3<f64>>() / 3.0)
            .collect();
        let mut order: Vec<u32> = (0..faces.len() as u32).collect();
        let mut nodes = Vec::with_capacity(2 * faces.len());
        build_node(vertices, faces, &centroids, &mut order, 0, faces.len(), &mut nodes);
        Self { nodes, order }
    }

    pub fn root_sphere(&self) -> (Vector3<f64>, f64) {
        (self.nodes[0].center, self.nodes[0].radius)
    }

    pub fn leaf_faces(&self, node: &Node) -> &[u32] {
        &self.order[node.start as usize..(node.start + node.count) as usize]
    }
}

fn build_node(
    vertices: &[Vector3<f64>],
    faces: &[[u32; 3]],
    centroids: &[Vector3<f64>],
    order: &mut [u32],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> u32 {
    let slice = &mut order[start..end];
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for &f in slice.iter() {
        for &v in &faces[f as usize] {
            lo = lo.inf(&vertices[v as usize]);
            hi = hi.sup(&vertices[v as usize]);
        }
    }
    let center = 0.5 * (lo + hi);
    let radius = slice
        .iter()
        .flat_map(|&f| faces[f as usize].iter())
        .map(|&v| (vertices[v as usize] - center).norm())
        .fold(0.0, f64::max);

    let index = nodes.len() as u32;
    nodes.push(Node {
        center,
        radius,
        box_center: center,
        half: 0.5 * (hi - lo),
        children: None,
        start: start as u32,
        count: (end - start) as u32,
    });
    if end - start <= LEAF_SIZE {
        return index;
    }

    let mut clo = Vector3::repeat(f64::INFINITY);
    let mut chi = Vector3::repeat(f64::NEG_INFINITY);
    for &f in slice.iter() {
        clo = clo.inf(&centroids[f as usize]);
        chi = chi.sup(&centroids[f as usize]);
    }
    let extent = chi - clo;
    let axis = extent.imax();
    slice.sort_by(|&a, &b| {
        centroids[a as usize][axis]
            .partial_cmp(&centroids[b as usize][axis])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mid = start + (end - start) / 2;
    let left = build_node(vertices, faces, centroids, order, start, mid, nodes);
    let right = build_node(vertices, faces, centroids, order, mid, end, nodes);
    nodes[index as usize].children = Some((left, right));
    index
}
