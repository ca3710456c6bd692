use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

/// Mean over the batch of the squared Euclidean distance between rows,
/// with its gradient `2(pred − label)/N`.
pub fn l2_loss<T: Real>(pred: &Tensor<T>, label: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    if pred.shape != label.shape || pred.shape.len() != 2 {
        return Err(Error::Shape(format!(
            "loss needs matching [N, D] tensors, got {:?} and {:?}",
            pred.shape, label.shape
        )));
    }
    let n = pred.batch().max(1);
    let scale = T::from_f64(2.0 / n as f64);
    let mut grad = Tensor::zeros(&pred.shape);
    let mut sum = 0.0;
    for ((g, &p), &l) in grad.data.iter_mut().zip(&pred.data).zip(&label.data) {
        let d = p - l;
        sum += d.as_f64() * d.as_f64();
        *g = scale * d;
    }
    Ok((sum / n as f64, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[[f64; 3]]) -> Tensor<f64> {
        Tensor::from_vec(&[rows.len(), 3], rows.iter().flatten().copied().collect()).unwrap()
    }

    #[test]
    fn zero_at_label() {
        let p = t(&[[0.1, -0.2, 0.3], [0.5, 0.5, 0.0]]);
        let (loss, grad) = l2_loss(&p, &p).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.data.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn three_four_five() {
        let (loss, grad) = l2_loss(&t(&[[0.3, -0.4, 0.0]]), &t(&[[0.0, 0.0, 0.0]])).unwrap();
        assert!((loss - 0.25).abs() < 1e-15);
        assert!((grad.data[0] - 0.6).abs() < 1e-15 && (grad.data[1] + 0.8).abs() < 1e-15);
    }

    #[test]
    fn homogeneous_of_degree_two() {
        let l = t(&[[0.2, 0.1, -0.3], [0.0, 0.4, 0.1]]);
        let p1 = t(&[[0.3, 0.0, -0.1], [0.1, 0.2, 0.3]]);
        let p2 = t(&[[0.4, -0.1, 0.1], [0.2, 0.0, 0.5]]);
        let (a, _) = l2_loss(&p1, &l).unwrap();
        let (b, _) = l2_loss(&p2, &l).unwrap();
        assert!((b - 4.0 * a).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch() {
        assert!(l2_loss(&Tensor::<f32>::zeros(&[2, 3]), &Tensor::zeros(&[3, 3])).is_err());
    }
}
