//! Naive single linkage: clusters as member sets, distances recomputed from
//! scratch as the minimum over member pairs at every step.

pub struct NaiveMerge {
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    pub height: f64,
}

pub fn single_linkage(d: &[Vec<f64>]) -> Vec<NaiveMerge> {
    let mut clusters: Vec<Vec<usize>> = (0..d.len()).map(|k| vec![k]).collect();
    let mut merges = Vec::new();
    while clusters.len() > 1 {
        // clusters are kept sorted by smallest member
        clusters.sort_by_key(|c| *c.iter().min().unwrap());
        let mut best = (0, 1, f64::INFINITY);
        for x in 0..clusters.len() {
            for y in (x + 1)..clusters.len() {
                let mut dist = f64::INFINITY;
                for &p in &clusters[x] {
                    for &q in &clusters[y] {
                        dist = dist.min(d[p][q]);
                    }
                }
                if dist < best.2 {
                    best = (x, y, dist);
                }
            }
        }
        let (x, y, height) = best;
        let b = clusters.remove(y);
        let a = clusters[x].clone();
        merges.push(NaiveMerge { a: a.clone(), b: b.clone(), height });
        clusters[x].extend(b);
    }
    merges
}
