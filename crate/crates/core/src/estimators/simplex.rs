/// Euclidean projection onto the probability simplex (Michelot's
/// algorithm): project onto the hyperplane `sum p = 1` restricted to the
/// active coordinates, drop coordinates that went negative, repeat.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut active: Vec<usize> = (0..v.len()).collect();
    loop {
        if active.is_empty() {
            return vec![0.0; v.len()];
        }
        let shift = (active.iter().map(|&i| v[i]).sum::<f64>() - 1.0) / active.len() as f64;
        let before = active.len();
        active.retain(|&i| v[i] - shift > 0.0);
        if active.len() == before {
            let mut out = vec![0.0; v.len()];
            for &i in &active {
                out[i] = v[i] - shift;
            }
            return out;
        }
    }
}
