//! Straight-from-the-formula diversity metrics, written without reference to
//! the library code. Rows are 0/1 correctness vectors, one per member.

pub fn table(a: &[u8], b: &[u8]) -> (f64, f64, f64, f64) {
    let (mut n11, mut n10, mut n01, mut n00) = (0.0, 0.0, 0.0, 0.0);
    for k in 0..a.len() {
        match (a[k], b[k]) {
            (1, 1) => n11 += 1.0,
            (1, 0) => n10 += 1.0,
            (0, 1) => n01 += 1.0,
            _ => n00 += 1.0,
        }
    }
    (n11, n10, n01, n00)
}

/// The printed kappa: its denominator pairs (n11+n10) with (n01+n00), unlike
/// the textbook chance-agreement form.
pub fn ck(a: &[u8], b: &[u8]) -> f64 {
    let (n11, n10, n01, n00) = table(a, b);
    let d = (n11 + n10) * (n01 + n00) + (n11 + n01) * (n10 + n00);
    if d == 0.0 {
        0.0
    } else {
        2.0 * (n11 * n00 - n01 * n10) / d
    }
}

pub fn qs(a: &[u8], b: &[u8]) -> f64 {
    let (n11, n10, n01, n00) = table(a, b);
    let d = n11 * n00 + n01 * n10;
    if d == 0.0 {
        0.0
    } else {
        (n11 * n00 - n01 * n10) / d
    }
}

pub fn bd(a: &[u8], b: &[u8]) -> f64 {
    let differ = a.iter().zip(b).filter(|(x, y)| x != y).count();
    differ as f64 / a.len() as f64
}

pub fn pair_mean(rows: &[Vec<u8>], f: fn(&[u8], &[u8]) -> f64) -> f64 {
    let mut vals = Vec::new();
    for i in 0..rows.len() {
        for j in 0..rows.len() {
            if i < j {
                vals.push(f(&rows[i], &rows[j]));
            }
        }
    }
    vals.iter().sum::<f64>() / vals.len() as f64
}

fn column_sums(rows: &[Vec<u8>]) -> Vec<f64> {
    (0..rows[0].len())
        .map(|k| rows.iter().map(|r| r[k] as f64).sum())
        .collect()
}

pub fn fk(rows: &[Vec<u8>]) -> f64 {
    let s = rows.len() as f64;
    let l = column_sums(rows);
    let n = l.len() as f64;
    let p = l.iter().sum::<f64>() / (n * s);
    if p * (1.0 - p) == 0.0 {
        return 1.0;
    }
    let spread: f64 = l.iter().map(|x| x * (s - x)).sum::<f64>() / s;
    1.0 - spread / (n * (s - 1.0) * p * (1.0 - p))
}

pub fn kw(rows: &[Vec<u8>]) -> f64 {
    let s = rows.len() as f64;
    let l = column_sums(rows);
    let n = l.len() as f64;
    l.iter().map(|x| x * (s - x)).sum::<f64>() / (n * s * s)
}

/// p(1) and p(2) as per-sample averages of drawing one or two failing members.
pub fn gd(rows: &[Vec<u8>]) -> f64 {
    let s = rows.len() as f64;
    let l = column_sums(rows);
    let n = l.len() as f64;
    let mut p1 = 0.0;
    let mut p2 = 0.0;
    for x in &l {
        let fails = s - x;
        p1 += fails / s / n;
        p2 += fails * (fails - 1.0) / (s * (s - 1.0)) / n;
    }
    if p1 == 0.0 {
        1.0
    } else {
        1.0 - p2 / p1
    }
}

/// Raw value by upper-case metric name.
pub fn raw(metric: &str, rows: &[Vec<u8>]) -> f64 {
    match metric {
        "CK" => pair_mean(rows, ck),
        "QS" => pair_mean(rows, qs),
        "BD" => pair_mean(rows, bd),
        "FK" => fk(rows),
        "KW" => kw(rows),
        "GD" => gd(rows),
        other => panic!("unknown metric {other}"),
    }
}
