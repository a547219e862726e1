use bodyfuse::data::{apply_mask, decode_pgm, decode_ppm, encode_pgm, encode_ppm, make_batches, ImageBuffer};
use bodyfuse::metrics::{iou, mean_iou};
use bodyfuse::nn::checkpoint::Checkpoint;
use bodyfuse::nn::{ParamRegistry, Role};
use bodyfuse::ops::{conv2d, conv2d_backward_data, conv_transpose2d, max_unpool2d, maxpool2d, sigmoid, softmax};
use bodyfuse::Tensor;
use proptest::prelude::*;

fn dims4() -> impl Strategy<Value = (usize, usize, usize, usize)> {
    (1usize..=2, 1usize..=3, 1usize..=5, 1usize..=5)
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conv_transpose_is_backward_data(
        (n, ci, h, w) in dims4(),
        co in 1usize..=3,
        stride in 1usize..=3,
        extra in 0usize..=2,
        seed in any::<u64>(),
    ) {
        let k = stride + extra;
        let pad = extra / 2;
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let mut draw = |shape: &[usize]| Tensor::<f64>::from_fn(shape, |_| rand::Rng::random_range(&mut rng, -1.0..1.0)).unwrap();
        let x = draw(&[n, ci, h, w]);
        let wt = draw(&[ci, co, k, k]);
        let y = conv_transpose2d(&x, &wt, stride, pad).unwrap();
        let (oh, ow) = (y.shape()[2], y.shape()[3]);
        let reference = conv2d_backward_data(&x, &wt, (oh, ow), stride, pad).unwrap();
        prop_assert!(close(y.data(), reference.data(), 1e-12));
    }

    #[test]
    fn identity_pointwise_conv((n, c, h, w) in dims4()) {
        let input = Tensor::<f64>::from_fn(&[n, c, h, w], |i| (i as f64).sin()).unwrap();
        let eye = Tensor::from_fn(&[c, c, 1, 1], |i| if i / c == i % c { 1.0 } else { 0.0 }).unwrap();
        let y = conv2d(&input, &eye, None, 1, 0).unwrap();
        prop_assert_eq!(y.data(), input.data());
    }

    #[test]
    fn softmax_rows_are_distributions(rows in 1usize..6, cols in 1usize..8, scale in 0.1f64..50.0, seed in any::<u32>()) {
        let x = Tensor::<f64>::from_fn(&[rows, cols], |i| scale * ((i as f64 + seed as f64) * 1.7).sin()).unwrap();
        let p = softmax(&x).unwrap();
        for r in p.data().chunks(cols) {
            prop_assert!(r.iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sigmoid_in_unit_interval(v in prop::collection::vec(-800.0f64..800.0, 1..64)) {
        let n = v.len();
        let s = sigmoid(&Tensor::from_vec(&[n], v).unwrap());
        prop_assert!(s.data().iter().all(|p| (0.0..=1.0).contains(p) && p.is_finite()));
    }

    #[test]
    fn unpool_after_pool_keeps_maxima((n, c, h, w) in dims4(), ceil in any::<bool>(), seed in any::<u64>()) {
        let h = h + 1;
        let w = w + 1;
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let x = Tensor::<f64>::from_fn(&[n, c, h, w], |_| rand::Rng::random_range(&mut rng, -1.0..1.0)).unwrap();
        let (pooled, idx) = maxpool2d(&x, 2, 2, ceil).unwrap();
        let up = max_unpool2d(&pooled, &idx, (h, w)).unwrap();
        prop_assert_eq!(up.shape(), x.shape());
        // every nonzero of the unpooled map is an input maximum at its own position
        for (u, v) in up.data().iter().zip(x.data()) {
            prop_assert!(*u == 0.0 || u == v);
        }
        // window maxima of the unpooled map reproduce the pooled values
        let lifted = max_unpool2d(&pooled.map(|v| v + 10.0), &idx, (h, w)).unwrap();
        let (again, _) = maxpool2d(&lifted, 2, 2, ceil).unwrap();
        let again = again.map(|v| v - 10.0);
        prop_assert!(close(again.data(), pooled.data(), 1e-12));
        // scatter-add preserves total mass
        prop_assert!((up.sum() - pooled.sum()).abs() < 1e-12);
    }

    #[test]
    fn checkpoint_round_trip(shapes in prop::collection::vec(prop::collection::vec(1usize..5, 1..4), 1..5), iteration in any::<u64>()) {
        let mut reg = ParamRegistry::<f32>::new();
        for (i, s) in shapes.iter().enumerate() {
            let t = Tensor::from_fn(s, |j| (j as f32 * 0.37 + i as f32).cos()).unwrap();
            reg.insert(format!("layer{i}/weight"), t, if i % 2 == 0 { Role::Weight } else { Role::Bias }).unwrap();
        }
        let ckpt = Checkpoint::from_registry(&reg, iteration);
        let bytes = ckpt.encode().unwrap();
        let back = Checkpoint::decode(&bytes).unwrap();
        prop_assert_eq!(&back, &ckpt);
        let mut restored = ParamRegistry::<f32>::new();
        for (name, p) in reg.iter() {
            restored.insert(name, p.value.zeros_like(), p.role).unwrap();
        }
        back.restore_into(&mut restored).unwrap();
        for ((_, a), (_, b)) in reg.iter().zip(restored.iter()) {
            prop_assert_eq!(a.value.data(), b.value.data());
        }
        prop_assert_eq!(back.encode().unwrap(), bytes);
    }

    #[test]
    fn iou_symmetric_and_reflexive(a in prop::collection::vec(any::<bool>(), 1..200), flips in prop::collection::vec(any::<bool>(), 200)) {
        let b: Vec<bool> = a.iter().zip(&flips).map(|(x, f)| x ^ f).collect();
        let ab = iou(&a, &b).unwrap();
        prop_assert_eq!(ab, iou(&b, &a).unwrap());
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(iou(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn mean_of_constant_list(v in 0.0f64..=1.0, n in 1usize..100) {
        prop_assert!((mean_iou(&vec![v; n]).unwrap() - v).abs() < 1e-12);
    }

    #[test]
    fn batches_cover_every_index_once(len in 1usize..200, batch in 1usize..20, seed in any::<u64>(), epoch in 0u64..5) {
        let batches = make_batches(len, batch, seed, epoch).unwrap();
        let mut all: Vec<usize> = batches.iter().flatten().copied().collect();
        prop_assert!(batches.iter().all(|b| !b.is_empty() && b.len() <= batch));
        all.sort_unstable();
        prop_assert_eq!(all, (0..len).collect::<Vec<_>>());
        prop_assert_eq!(make_batches(len, batch, seed, epoch).unwrap(), batches);
    }

    #[test]
    fn image_tensor_round_trip(w in 1usize..12, h in 1usize..12, samples in prop::collection::vec(any::<u8>(), 3 * 144)) {
        let img = ImageBuffer::new(w, h, 3, samples[..3 * w * h].to_vec()).unwrap();
        let t = img.to_tensor::<f32>();
        prop_assert_eq!(t.shape(), &[3, h, w][..]);
        prop_assert_eq!(&ImageBuffer::from_tensor(&t).unwrap(), &img);
        prop_assert_eq!(&decode_ppm(&encode_ppm(&img).unwrap()).unwrap(), &img);
    }

    #[test]
    fn mask_round_trip(w in 1usize..12, h in 1usize..12, bits in prop::collection::vec(any::<bool>(), 144)) {
        let samples: Vec<u8> = bits[..w * h].iter().map(|&b| if b { 255 } else { 0 }).collect();
        let img = ImageBuffer::new(w, h, 1, samples).unwrap();
        let m = img.to_mask::<f64>().unwrap();
        prop_assert!(m.data().iter().all(|v| *v == 0.0 || *v == 1.0));
        prop_assert_eq!(&ImageBuffer::from_mask(&m).unwrap(), &img);
        prop_assert_eq!(&decode_pgm(&encode_pgm(&img).unwrap()).unwrap(), &img);
    }

    #[test]
    fn apply_mask_idempotent((n, _c, h, w) in dims4(), seed in any::<u64>()) {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let img = Tensor::<f64>::from_fn(&[n, 3, h, w], |_| rand::Rng::random_range(&mut rng, 0.0..1.0)).unwrap();
        let mask = Tensor::<f64>::from_fn(&[n, 1, h, w], |_| if rand::Rng::random_bool(&mut rng, 0.5) { 1.0 } else { 0.0 }).unwrap();
        let once = apply_mask(&img, &mask).unwrap();
        let twice = apply_mask(&once, &mask).unwrap();
        prop_assert_eq!(once.data(), twice.data());
    }
}
