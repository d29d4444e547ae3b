use super::LabelMap;

/// Marks every pixel that lies within Chebyshev distance `band_width` of a
/// pixel carrying a different class label as ignored.
///
/// Ignored input pixels never count as a "different label" and stay ignored.
/// The test runs as a separable sliding min/max over class labels: a pixel is
/// on a boundary iff the window's min or max class differs from its own.
pub fn ignore_boundary(labels: &LabelMap, band_width: usize) -> LabelMap {
    if band_width == 0 {
        return labels.clone();
    }
    let (h, w) = (labels.height(), labels.width());
    let ig = labels.ignore_index();
    let src = labels.labels();

    // Ignored pixels are neutral: +inf for the min pass, -inf for the max pass.
    let lo: Vec<i16> = src.iter().map(|&l| if l == ig { i16::MAX } else { l as i16 }).collect();
    let hi: Vec<i16> = src.iter().map(|&l| if l == ig { i16::MIN } else { l as i16 }).collect();
    let win_min = window_reduce(&lo, h, w, band_width, i16::min);
    let win_max = window_reduce(&hi, h, w, band_width, i16::max);

    let out = src
        .iter()
        .enumerate()
        .map(|(p, &l)| {
            if l == ig {
                return ig;
            }
            let own = l as i16;
            if win_min[p] != own || win_max[p] != own {
                ig
            } else {
                l
            }
        })
        .collect();
    LabelMap::new(h, w, labels.n_classes(), out).expect("relabeling keeps labels in range")
}

fn window_reduce(src: &[i16], h: usize, w: usize, r: usize, f: fn(i16, i16) -> i16) -> Vec<i16> {
    let mut rows = vec![0i16; h * w];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let a = x.saturating_sub(r);
            let b = (x + r).min(w - 1);
            rows[y * w + x] = row[a..=b].iter().copied().reduce(f).unwrap();
        }
    }
    let mut out = vec![0i16; h * w];
    for x in 0..w {
        for y in 0..h {
            let a = y.saturating_sub(r);
            let b = (y + r).min(h - 1);
            out[y * w + x] = (a..=b).map(|yy| rows[yy * w + x]).reduce(f).unwrap();
        }
    }
    out
}
