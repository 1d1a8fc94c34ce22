//! Reference implementations written independently of the library.

/// Rule filter over raw 9-bit vectors, flag `g` in the most significant bit.
pub fn brute_force_valid(bits: u16) -> bool {
    let on = |letter: char| {
        let pos = "grncyfitk".find(letter).unwrap();
        bits >> (8 - pos) & 1 == 1
    };
    let skip_general_ok = !on('g') || !(on('r') || on('n') || on('c') || on('y') || on('f'));
    let flop_order_ok = !on('f') || on('y');
    let ctg_ok = !on('c') || !on('n');
    let refine_ok = !on('k') || on('t');
    skip_general_ok && flop_order_ok && ctg_ok && refine_ok
}

/// Kendall's tau-a by counting every pair.
pub fn tau_oracle(truth: &[f64], pred: &[f64]) -> f64 {
    let n = truth.len();
    let mut score = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            let s = (truth[i] - truth[j]).signum() * (pred[i] - pred[j]).signum();
            if truth[i] != truth[j] && pred[i] != pred[j] {
                score += s as i64;
            }
        }
    }
    score as f64 / (n * (n - 1) / 2) as f64
}

/// Spearman's rho from squared rank differences; ranks must be distinct.
pub fn rho_oracle(truth_ranks: &[usize], pred_ranks: &[usize]) -> f64 {
    let n = truth_ranks.len() as i64;
    let d2: i64 = truth_ranks.iter().zip(pred_ranks).map(|(&a, &b)| (a as i64 - b as i64).pow(2)).sum();
    1.0 - 6.0 * d2 as f64 / (n * (n * n - 1)) as f64
}

/// Every permutation of `0..n`, lexicographic.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for v in 0..used.len() {
            if !used[v] {
                used[v] = true;
                prefix.push(v);
                go(prefix, used, out);
                prefix.pop();
                used[v] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}
