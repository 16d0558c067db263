#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "zerowm/distort.hpp"
#include "zerowm/errors.hpp"
#include "zerowm/eval.hpp"
#include "zerowm/losses.hpp"
#include "zerowm/metrics.hpp"
#include "zerowm/nn/checkpoint.hpp"
#include "zerowm/store.hpp"
#include "zerowm/synth.hpp"
#include "zerowm/train.hpp"
#include "zerowm/wm.hpp"

namespace py = pybind11;
using namespace zw;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

// Python side uses HWC float32 arrays in [0,1]; the core is CHW.
Image image_from_numpy(const FloatArray& arr) {
    if (arr.ndim() != 3 || arr.shape(0) != kImageSize || arr.shape(1) != kImageSize ||
        arr.shape(2) != kImageChannels)
        throw ParameterError("expected a (128,128,3) float32 array");
    Image img({kImageChannels, kImageSize, kImageSize});
    auto view = arr.unchecked<3>();
    for (int64_t y = 0; y < kImageSize; ++y)
        for (int64_t x = 0; x < kImageSize; ++x)
            for (int64_t c = 0; c < kImageChannels; ++c) at(img, c, y, x) = view(y, x, c);
    validate_image(img);
    return img;
}

py::array_t<float> image_to_numpy(const Tensor<float>& img) {
    py::array_t<float> out({kImageSize, kImageSize, kImageChannels});
    auto view = out.mutable_unchecked<3>();
    for (int64_t y = 0; y < kImageSize; ++y)
        for (int64_t x = 0; x < kImageSize; ++x)
            for (int64_t c = 0; c < kImageChannels; ++c)
                view(y, x, c) = img[(c * kImageSize + y) * kImageSize + x];
    return out;
}

DistortionSpec spec_from_args(const std::string& kind, const py::dict& params, uint64_t seed) {
    DistortionSpec spec;
    spec.kind = kind_from_name(kind);
    spec.seed = seed;
    for (const auto& item : params)
        spec.params[py::cast<std::string>(item.first)] = py::cast<double>(item.second);
    validate_spec(spec);
    return spec;
}

class PyFeatureExtractor {
public:
    explicit PyFeatureExtractor(const std::string& ckpt_dir) : reader_(ckpt_dir) {
        reader_.load_fe(fe_);
    }

    py::array_t<float> features(const FloatArray& arr) {
        const Image img = image_from_numpy(arr);
        return image_to_numpy(fe_feature(fe_, img));
    }

    py::array_t<float> pooled(const FloatArray& arr) {
        const Image img = image_from_numpy(arr);
        const Tensor<float> p = tile_pool(fe_feature(fe_, img));
        py::array_t<float> out(static_cast<py::ssize_t>(p.numel()));
        std::memcpy(out.mutable_data(), p.data(), p.numel() * sizeof(float));
        return out;
    }

    std::string checkpoint_id() const { return reader_.id(); }

    nn::FeatureExtractor<float>& net() { return fe_; }

private:
    nn::CheckpointReader reader_;
    nn::FeatureExtractor<float> fe_;
};

}  // namespace

PYBIND11_MODULE(_zerowm, m) {
    m.doc() = "Distortion-invariant feature training and multibit zero-watermarking";

    py::register_exception<ParameterError>(m, "ParameterError", PyExc_ValueError);
    py::register_exception<PreconditionError>(m, "PreconditionError", PyExc_ValueError);
    py::register_exception<NotFoundError>(m, "NotFoundError", PyExc_FileNotFoundError);
    py::register_exception<IntegrityError>(m, "IntegrityError", PyExc_RuntimeError);
    py::register_exception<RegistrationError>(m, "RegistrationError", PyExc_RuntimeError);

    m.def(
        "apply_distortion",
        [](const FloatArray& arr, const std::string& kind, const py::dict& params,
           uint64_t seed) {
            return image_to_numpy(
                apply_distortion(image_from_numpy(arr), spec_from_args(kind, params, seed)));
        },
        py::arg("image"), py::arg("kind"), py::arg("params") = py::dict(), py::arg("seed") = 0);

    m.def("sample_training_distortion", [](uint64_t seed) {
        const DistortionSpec spec = sample_training_distortion(seed);
        py::dict out;
        out["kind"] = kind_name(spec.kind);
        out["params"] = spec.params;
        out["seed"] = spec.seed;
        return out;
    });

    m.def("photometric_suite", [](const std::string& phase) {
        const auto grid = photometric_suite(phase == "training" ? DistortionPhase::training
                                                                : DistortionPhase::testing);
        py::list out;
        for (const auto& spec : grid) {
            py::dict d;
            d["kind"] = kind_name(spec.kind);
            d["params"] = spec.params;
            d["seed"] = spec.seed;
            out.append(d);
        }
        return out;
    });

    m.def("psnr", [](const FloatArray& a, const FloatArray& b) {
        return psnr(image_from_numpy(a), image_from_numpy(b));
    });
    m.def("psnr_from_mse", &psnr_from_mse);
    m.def("ssim", [](const FloatArray& a, const FloatArray& b) {
        return ssim(image_from_numpy(a), image_from_numpy(b));
    });
    m.def("cosine_similarity", [](const FloatArray& a, const FloatArray& b) {
        if (a.size() != b.size()) throw PreconditionError("length mismatch");
        return cosine_similarity(a.data(), b.data(), static_cast<int64_t>(a.size()));
    });
    m.def("bit_error_rate", [](const std::string& a, const std::string& b) {
        return bit_error_rate(WatermarkMessage::from_string(a), WatermarkMessage::from_string(b));
    });

    m.def("synth_image", [](uint64_t seed, int64_t index) {
        int label = -1;
        const Image img = synth_image(seed, index, &label);
        return py::make_tuple(image_to_numpy(img), label);
    });
    m.def("synth_dataset", &synth_dataset, py::arg("out_dir"), py::arg("count"), py::arg("seed"),
          py::arg("labeled") = false);

    py::class_<PyFeatureExtractor>(m, "FeatureExtractor")
        .def(py::init<const std::string&>(), py::arg("checkpoint_dir"))
        .def("features", &PyFeatureExtractor::features, py::arg("image"),
             "Spatial feature tensor as a (128,128,3) array")
        .def("pooled", &PyFeatureExtractor::pooled, py::arg("image"),
             "Tile-pooled 192-dimensional feature vector")
        .def_property_readonly("checkpoint_id", &PyFeatureExtractor::checkpoint_id);

    m.def(
        "train_features",
        [](const std::string& config_json, const std::string& data_dir,
           const std::string& out_dir) {
            const TrainingConfig cfg = TrainingConfig::from_json(config_json);
            ImageSet set = load_image_dir(data_dir);
            if (set.images.empty()) throw PreconditionError("no images in " + data_dir);
            Trainer trainer(cfg);
            trainer.fit(set.images, out_dir);
            return out_dir + "/ckpt_final";
        },
        py::arg("config_json"), py::arg("data_dir"), py::arg("out_dir"));

    m.def(
        "init_checkpoint",
        [](const std::string& config_json, const std::string& out_dir) {
            init_checkpoint(TrainingConfig::from_json(config_json), out_dir);
            return out_dir;
        },
        py::arg("config_json"), py::arg("out_dir"));

    m.def(
        "register_image",
        [](const FloatArray& arr, const std::string& bits, const std::string& ckpt_dir,
           const std::string& store_dir, uint64_t seed) {
            const Image img = image_from_numpy(arr);
            PyFeatureExtractor pfe(ckpt_dir);
            RegisterOptions opts;
            opts.seed = seed;
            const auto result = register_signature(img, WatermarkMessage::from_string(bits),
                                                   pfe.net(), pfe.checkpoint_id(), opts);
            SignatureStore store(store_dir);
            store.put(result.record);
            return result.record.record_id;
        },
        py::arg("image"), py::arg("bits"), py::arg("checkpoint_dir"), py::arg("store_dir"),
        py::arg("seed") = 0);

    m.def(
        "extract_bits",
        [](const FloatArray& arr, const std::string& record_id, const std::string& ckpt_dir,
           const std::string& store_dir) {
            const Image img = image_from_numpy(arr);
            PyFeatureExtractor pfe(ckpt_dir);
            SignatureStore store(store_dir);
            const SignatureRecord record = store.get(record_id);
            std::vector<double> probs;
            const WatermarkMessage bits =
                extract_bits(img, record, pfe.net(), pfe.checkpoint_id(), &probs);
            return py::make_tuple(bits.to_string(), probs);
        },
        py::arg("image"), py::arg("record_id"), py::arg("checkpoint_dir"), py::arg("store_dir"));
}
