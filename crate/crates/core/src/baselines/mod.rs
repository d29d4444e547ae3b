//! Classical comparison methods: nearest class median under cosine
//! similarity, and fuzzy c-means clustering.

mod fcm;
mod knn;

pub use fcm::{fuzzy_cmeans, fuzzy_cmeans_from, hard_assign, FcmOptions, FuzzyState};
pub use knn::{
    fit_medians, fit_medians_from_samples, knn_classify, knn_segment, KnnRule, KnnSegmentation,
    MedianModel,
};
