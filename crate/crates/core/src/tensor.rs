use crate::model::TensorShape;

/// Float activation tensor, channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: TensorShape,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: TensorShape, data: Vec<f32>) -> Self {
        assert_eq!(shape.len(), data.len(), "tensor data does not match {shape}");
        Self { shape, data }
    }

    pub fn zeros(shape: TensorShape) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn at(&self, ch: usize, row: usize, col: usize) -> f32 {
        self.data[self.shape.index(ch, row, col)]
    }
}

/// Scale 8-bit pixels to `[0, 1)` by dividing by 256.
pub fn normalize_pixels(pixels: &[u8]) -> Vec<f32> {
    pixels.iter().map(|&p| f32::from(p) / 256.0).collect()
}

/// Index of the largest element; the lowest index wins ties.
pub fn argmax<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_prefers_lowest_index_on_tie() {
        assert_eq!(argmax(&[1, 3, 3, 2]), 1);
        assert_eq!(argmax(&[0.0f32, 0.0, 0.0]), 0);
        assert_eq!(argmax(&[-5i64]), 0);
    }

    #[test]
    fn pixels_land_in_unit_interval() {
        let px = normalize_pixels(&[0, 128, 255]);
        assert_eq!(px, vec![0.0, 0.5, 255.0 / 256.0]);
        assert!(px.iter().all(|&x| (0.0..1.0).contains(&x)));
    }
}
