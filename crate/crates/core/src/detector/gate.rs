/// Two-point Euclidean gate: passes iff the joint and effector estimates lie
/// strictly within `epsilon` (metres) of the actual positions, combined as a
/// single four-term distance.
pub fn euclidean_gate(estimate: [[f64; 2]; 2], actual: [[f64; 2]; 2], epsilon: f64) -> bool {
    let d2: f64 = estimate
        .iter()
        .zip(actual.iter())
        .flat_map(|(e, a)| [(e[0] - a[0]).powi(2), (e[1] - a[1]).powi(2)])
        .sum();
    d2.sqrt() < epsilon
}
