//! Straight-line reference allocator over `Ratio<i128>`, written from the
//! allocation equations without sharing code with the library.

use num_rational::Ratio;

pub type Q = Ratio<i128>;

#[derive(Debug, Clone)]
pub struct RefJob {
    pub nodes: i128,
    pub demand: i128,
    pub prev: Option<i128>,
    pub record: i128,
    pub rem: Q,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefOut {
    pub grants: Vec<i128>,
    pub records: Vec<i128>,
    pub rems: Vec<Q>,
}

fn q(n: i128) -> Q {
    Q::from_integer(n)
}

/// Largest-remainder apportionment of `raw` (plus carried fractions) to
/// integers summing to `total`. Index order doubles as id order.
fn apportion(raw: &[Q], carried: &[Q], total: i128) -> (Vec<i128>, Vec<Q>) {
    let n = raw.len();
    let mut g = vec![0i128; n];
    let mut rem = vec![q(0); n];
    for i in 0..n {
        let v = raw[i] + carried[i];
        g[i] = v.floor().to_integer();
        rem[i] = v - q(g[i]);
    }
    let diff = total - g.iter().sum::<i128>();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| rem[b].cmp(&rem[a]).then(a.cmp(&b)));
    if diff > 0 {
        for &i in idx.iter().take(diff as usize) {
            g[i] += 1;
            rem[i] = q(0);
        }
    } else if diff < 0 {
        let holders: Vec<usize> = idx.into_iter().filter(|&i| g[i] >= 1).collect();
        for &i in holders.iter().take((-diff) as usize) {
            g[i] -= 1;
        }
    }
    (g, rem)
}

/// One allocation round. `post_bound` bounds reclaim by the record after
/// redistribution instead of before it.
pub fn reference_step(total: i128, jobs: &[RefJob], post_bound: bool) -> RefOut {
    let n = jobs.len();
    let node_sum: i128 = jobs.iter().map(|j| j.nodes).sum();
    let p: Vec<Q> = jobs.iter().map(|j| Q::new(j.nodes, node_sum)).collect();
    let mut rho: Vec<Q> = jobs.iter().map(|j| j.rem).collect();
    let r0: Vec<i128> = jobs.iter().map(|j| j.record).collect();
    let d: Vec<i128> = jobs.iter().map(|j| j.demand).collect();

    // Priority share of the whole budget.
    let raw: Vec<Q> = p.iter().map(|pi| *pi * q(total)).collect();
    let (mut a, r1) = apportion(&raw, &rho, total);
    rho = r1;

    // Utilization against the previous grant; no or zero previous grant
    // with demand counts as exactly 1.
    let u: Vec<Q> = jobs
        .iter()
        .map(|j| match j.prev {
            Some(prev) if prev > 0 => Q::new(j.demand, prev),
            _ => q(if j.demand > 0 { 1 } else { 0 }),
        })
        .collect();
    let s: Vec<i128> = (0..n).map(|i| (a[i] - d[i]).max(0)).collect();
    let s_total: i128 = s.iter().sum();
    let df: Vec<Q> = (0..n)
        .map(|i| {
            if u[i] > q(1) {
                u[i] + u[i] * p[i]
            } else {
                u[i] * p[i]
            }
        })
        .collect();
    let df_sum: Q = df.iter().sum();

    let mut r = r0.clone();
    if s_total > 0 && df_sum == q(0) {
        for i in 0..n {
            a[i] -= s[i];
            r[i] += s[i];
        }
    } else {
        let shares: Vec<Q> = (0..n)
            .map(|i| {
                if df_sum == q(0) {
                    q(0)
                } else {
                    df[i] / df_sum * q(s_total)
                }
            })
            .collect();
        let (got, r2) = apportion(&shares, &rho, s_total);
        rho = r2;
        for i in 0..n {
            a[i] = a[i] - s[i] + got[i];
            r[i] = r[i] + s[i] - got[i];
        }
    }
    let a_rd = a.clone();
    let r_rd = r.clone();

    let plus: Vec<usize> = (0..n).filter(|&i| r0[i] > 0 && r_rd[i] > 0).collect();
    let minus: Vec<usize> = (0..n).filter(|&i| r0[i] < 0 && r_rd[i] < 0).collect();
    if !plus.is_empty() && !minus.is_empty() {
        let mut c = q(0);
        for &i in &plus {
            let current = if u[i] > q(1) { u[i] } else { q(1) };
            let headroom = if a_rd[i] == 0 {
                q(0)
            } else {
                let fu = Q::new(d[i], a_rd[i]);
                if fu < q(1) {
                    q(1) - fu
                } else {
                    q(0)
                }
            };
            c += p[i] * (current + headroom) / q(2);
        }
        let mut reclaimed = 0i128;
        for &i in &minus {
            let owed = if post_bound {
                r_rd[i].abs()
            } else {
                r0[i].abs()
            };
            let claim = (c * q(a_rd[i])).floor().to_integer();
            let take = owed.min(claim).min(a_rd[i]);
            a[i] -= take;
            r[i] += take;
            reclaimed += take;
        }
        if reclaimed > 0 {
            let df_plus: Q = plus.iter().map(|&i| df[i]).sum();
            let weights: Vec<Q> = if df_plus == q(0) {
                plus.iter().map(|&i| p[i]).collect()
            } else {
                plus.iter().map(|&i| df[i]).collect()
            };
            let w_sum: Q = weights.iter().sum();
            let shares: Vec<Q> = weights.iter().map(|w| *w / w_sum * q(reclaimed)).collect();
            let carried: Vec<Q> = plus.iter().map(|&i| rho[i]).collect();
            let (got, r3) = apportion(&shares, &carried, reclaimed);
            for (k, &i) in plus.iter().enumerate() {
                a[i] += got[k];
                r[i] -= got[k];
                rho[i] = r3[k];
            }
        }
    }
    debug_assert!(a.iter().all(|x| *x >= 0));
    RefOut {
        grants: a,
        records: r,
        rems: rho,
    }
}
