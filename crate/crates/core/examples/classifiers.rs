//! Random forest, decision tree, KNN and decision fusion on toy data.

use biosig_affect::corpus::ArousalLabel;
use biosig_affect::model::{
    decision_fusion_train, evaluate, knn_predict, train_decision_tree, train_random_forest, DecisionTreeConfig,
    ForestConfig, KNN_K,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn blobs(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<ArousalLabel>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = Normal::new(0.0, 1.0).unwrap();
    (0..n)
        .map(|i| {
            let c = if i % 2 == 0 { 1.2 } else { -1.2 };
            (vec![c + z.sample(&mut rng), c + z.sample(&mut rng), z.sample(&mut rng)], ArousalLabel::from_bool(i % 2 == 0))
        })
        .unzip()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (x, y) = blobs(300, 1);
    let (xt, yt) = blobs(200, 2);
    let ds = vec!["toy"; yt.len()];

    let forest = train_random_forest(&x, &y, &ForestConfig { seed: 7, ..Default::default() })?;
    let rf = evaluate(&yt, &forest.predict(&xt)?, &ds)?;
    println!("random forest: accuracy {:.3} f1 {:.3}", rf.accuracy, rf.f1);

    let tree = train_decision_tree(&x, &y, &DecisionTreeConfig::default())?;
    let dt: Vec<ArousalLabel> = xt.iter().map(|r| tree.predict_one(r)).collect();
    let dt = evaluate(&yt, &dt, &ds)?;
    println!("decision tree: accuracy {:.3} ({} nodes, depth {})", dt.accuracy, tree.node_count(), tree.depth());

    let knn = evaluate(&yt, &knn_predict(&x, &y, &xt, KNN_K)?, &ds)?;
    println!("knn k={KNN_K}: accuracy {:.3}", knn.accuracy);

    // fuse two single-feature forests at the decision level
    let col = |m: &[Vec<f64>], j: usize| -> Vec<Vec<f64>> { m.iter().map(|r| vec![r[j]]).collect() };
    let fa = train_random_forest(&col(&x, 0), &y, &ForestConfig::default())?;
    let fb = train_random_forest(&col(&x, 1), &y, &ForestConfig::default())?;
    let fused = decision_fusion_train(&fa.predict_proba(&col(&x, 0))?, &fb.predict_proba(&col(&x, 1))?, &y)?;
    let pred = fused.predict(&fa.predict_proba(&col(&xt, 0))?, &fb.predict_proba(&col(&xt, 1))?);
    println!("decision fusion {:?}: accuracy {:.3}", fused, evaluate(&yt, &pred, &ds)?.accuracy);
    Ok(())
}
