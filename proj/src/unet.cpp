#include "lctem/unet.hpp"

#include <cmath>
#include <optional>
#include <sstream>

#include "lctem/random.hpp"
#include "lctem/text.hpp"

namespace lctem {

int ModelConfig::downsampling_factor() const {
  return 1 << (stages() + (stem == StemKind::Conv7 ? 1 : 0));
}

void ModelConfig::validate() const {
  if (encoder_blocks.empty()) throw InputError("model: at least one encoder stage is required");
  for (int d : encoder_blocks)
    if (d < 1) throw InputError("model: encoder stage depths must be >= 1");
  if (base_width < 1) throw InputError("model: base_width must be >= 1");
  if (input_channels != 1 || output_channels != 1)
    throw InputError("model: only single-channel input and output are supported");
  if (stages() > 12) throw InputError("model: too many encoder stages");
  if (input_size < 1 || input_size % downsampling_factor() != 0)
    throw InputError("model: input_size " + std::to_string(input_size) +
                     " is not divisible by the downsampling factor " +
                     std::to_string(downsampling_factor()));
}

std::string ModelConfig::to_record() const {
  std::ostringstream os;
  os << "encoder_blocks=";
  for (std::size_t i = 0; i < encoder_blocks.size(); ++i) os << (i ? "," : "") << encoder_blocks[i];
  os << "\nbase_width=" << base_width << "\ninput_channels=" << input_channels
     << "\noutput_channels=" << output_channels << "\ninput_size=" << input_size
     << "\nstem=" << (stem == StemKind::Conv3 ? "conv3" : "conv7")
     << "\nnorm=" << (norm == NormKind::Batch ? "batch" : "none") << "\n";
  return os.str();
}

ModelConfig ModelConfig::from_record(const std::string& text) {
  ModelConfig c;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InputError("model record: malformed line '" + line + "'");
    const std::string key(trim(std::string_view(line).substr(0, eq)));
    const std::string value(trim(std::string_view(line).substr(eq + 1)));
    if (key == "encoder_blocks") {
      c.encoder_blocks.clear();
      for (const auto& f : split(value, ','))
        c.encoder_blocks.push_back(static_cast<int>(parse_int(f, key)));
    } else if (key == "base_width") {
      c.base_width = static_cast<int>(parse_int(value, key));
    } else if (key == "input_channels") {
      c.input_channels = static_cast<int>(parse_int(value, key));
    } else if (key == "output_channels") {
      c.output_channels = static_cast<int>(parse_int(value, key));
    } else if (key == "input_size") {
      c.input_size = static_cast<int>(parse_int(value, key));
    } else if (key == "stem") {
      if (value != "conv3" && value != "conv7") throw InputError("model record: bad stem '" + value + "'");
      c.stem = value == "conv3" ? StemKind::Conv3 : StemKind::Conv7;
    } else if (key == "norm") {
      if (value != "batch" && value != "none") throw InputError("model record: bad norm '" + value + "'");
      c.norm = value == "batch" ? NormKind::Batch : NormKind::None;
    } else {
      throw InputError("model record: unknown key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

namespace {

/// conv -> optional batch norm, the unit every block is built from.
template <typename Scalar>
struct ConvNorm {
  Conv2d<Scalar> conv;
  std::optional<BatchNorm2d<Scalar>> norm;

  ConvNorm(ParamStore<Scalar>& store, const std::string& name, int in_c, int out_c, int k,
           int stride, int pad, NormKind kind)
      : conv(store, name + ".conv", in_c, out_c, k, stride, pad, kind == NormKind::None) {
    if (kind == NormKind::Batch) norm.emplace(store, name + ".bn", out_c);
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, NormMode mode, bool keep) {
    Tensor<Scalar> h = conv.forward(x, keep);
    return norm ? norm->forward(h, mode, keep) : h;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& g) {
    return conv.backward(norm ? norm->backward(g) : g);
  }
};

template <typename Scalar>
struct BasicBlock {
  ConvNorm<Scalar> first;
  ConvNorm<Scalar> second;
  std::optional<ConvNorm<Scalar>> shortcut;
  Tensor<Scalar> mid_act, out_act;

  BasicBlock(ParamStore<Scalar>& store, const std::string& name, int in_c, int out_c, int stride,
             NormKind kind)
      : first(store, name + ".a", in_c, out_c, 3, stride, 1, kind),
        second(store, name + ".b", out_c, out_c, 3, 1, 1, kind) {
    if (stride != 1 || in_c != out_c) shortcut.emplace(store, name + ".down", in_c, out_c, 1, stride, 0, kind);
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, NormMode mode, bool keep) {
    Tensor<Scalar> h = relu_forward(first.forward(x, mode, keep));
    if (keep) mid_act = h;
    h = second.forward(h, mode, keep);
    if (shortcut) h.values() += shortcut->forward(x, mode, keep).values();
    else h.values() += x.values();
    Tensor<Scalar> out = relu_forward(h);
    if (keep) out_act = out;
    return out;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& g) {
    const Tensor<Scalar> gsum = relu_backward(out_act, g);
    Tensor<Scalar> gx = first.backward(relu_backward(mid_act, second.backward(gsum)));
    if (shortcut) gx.values() += shortcut->backward(gsum).values();
    else gx.values() += gsum.values();
    return gx;
  }
};

template <typename Scalar>
struct DecoderStage {
  ConvNorm<Scalar> first;
  ConvNorm<Scalar> second;
  int up_channels = 0;
  bool has_skip = true;
  Tensor<Scalar> act1, act2;

  DecoderStage(ParamStore<Scalar>& store, const std::string& name, int up_c, int skip_c, int out_c,
               NormKind kind)
      : first(store, name + ".a", up_c + skip_c, out_c, 3, 1, 1, kind),
        second(store, name + ".b", out_c, out_c, 3, 1, 1, kind),
        up_channels(up_c),
        has_skip(skip_c > 0) {}

  Tensor<Scalar> forward(const Tensor<Scalar>& below, const Tensor<Scalar>* skip, NormMode mode,
                         bool keep) {
    Tensor<Scalar> u = upsample_nearest2x_forward(below);
    if (skip) u = concat_channels(u, *skip);
    Tensor<Scalar> h = relu_forward(first.forward(u, mode, keep));
    if (keep) act1 = h;
    h = relu_forward(second.forward(h, mode, keep));
    if (keep) act2 = h;
    return h;
  }

  /// Returns (grad below, grad skip).
  std::pair<Tensor<Scalar>, Tensor<Scalar>> backward(const Tensor<Scalar>& g) {
    Tensor<Scalar> gc = first.backward(relu_backward(act1, second.backward(relu_backward(act2, g))));
    if (!has_skip) return {upsample_nearest2x_backward(gc), Tensor<Scalar>()};
    auto [gu, gs] = split_channels(gc, up_channels);
    return {upsample_nearest2x_backward(gu), std::move(gs)};
  }
};

}  // namespace

template <typename Scalar>
struct UNet<Scalar>::Impl {
  ConvNorm<Scalar> stem;
  std::vector<std::vector<BasicBlock<Scalar>>> encoder;
  std::vector<DecoderStage<Scalar>> decoder;  ///< deepest first
  std::optional<DecoderStage<Scalar>> top;    ///< skip-less stage after a stride-2 stem
  Conv2d<Scalar> head;
  Tensor<Scalar> stem_act;
  std::vector<Tensor<Scalar>> skips;

  Impl(ParamStore<Scalar>& store, const ModelConfig& c)
      : stem(store, "stem", c.input_channels, c.base_width, c.stem == StemKind::Conv3 ? 3 : 7,
             c.stem == StemKind::Conv3 ? 1 : 2, c.stem == StemKind::Conv3 ? 1 : 3, c.norm) {
    const int S = c.stages();
    std::vector<int> skip_width{c.base_width};
    int in_c = c.base_width;
    for (int s = 0; s < S; ++s) {
      const int width = c.base_width << s;
      auto& stage = encoder.emplace_back();
      stage.reserve(static_cast<std::size_t>(c.encoder_blocks[static_cast<std::size_t>(s)]));
      for (int b = 0; b < c.encoder_blocks[static_cast<std::size_t>(s)]; ++b) {
        stage.emplace_back(store, "enc" + std::to_string(s + 1) + ".block" + std::to_string(b),
                           b == 0 ? in_c : width, width, b == 0 ? 2 : 1, c.norm);
      }
      in_c = width;
      if (s + 1 < S) skip_width.push_back(width);
    }
    const int top_width = std::max(1, c.base_width / 2);
    const bool conv3 = c.stem == StemKind::Conv3;
    int below = in_c;
    decoder.reserve(static_cast<std::size_t>(S));
    for (int level = S - 1; level >= 0; --level) {
      const int width = (level == 0 && conv3) ? top_width : skip_width[static_cast<std::size_t>(level)];
      decoder.emplace_back(store, "dec" + std::to_string(level), below,
                           skip_width[static_cast<std::size_t>(level)], width, c.norm);
      below = width;
    }
    if (!conv3) {
      top.emplace(store, "dec_top", below, 0, top_width, c.norm);
      below = top_width;
    }
    head = Conv2d<Scalar>(store, "head", below, c.output_channels, 3, 1, 1, true);
  }
};

template <typename Scalar>
UNet<Scalar>::UNet(const ModelConfig& config, std::uint64_t seed)
    : config_(config), store_(std::make_unique<ParamStore<Scalar>>()) {
  config_.validate();
  impl_ = std::make_unique<Impl>(*store_, config_);
  Rng rng(seed);
  for (auto& [name, p] : store_->params()) {
    const Shape& s = p.value.shape();
    const bool conv_weight = name.size() > 7 && name.ends_with(".weight");
    if (!conv_weight) continue;
    const double fan_in = static_cast<double>(s.c) * s.h * s.w;
    const double bound = std::sqrt(6.0 / fan_in);
    for (std::int64_t i = 0; i < p.value.size(); ++i)
      p.value.data()[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
  }
}

template <typename Scalar>
UNet<Scalar>::~UNet() = default;
template <typename Scalar>
UNet<Scalar>::UNet(UNet&&) noexcept = default;
template <typename Scalar>
UNet<Scalar>& UNet<Scalar>::operator=(UNet&&) noexcept = default;

template <typename Scalar>
int UNet<Scalar>::encoder_stages() const {
  return static_cast<int>(impl_->encoder.size());
}
template <typename Scalar>
int UNet<Scalar>::decoder_stages() const {
  return static_cast<int>(impl_->decoder.size());
}
template <typename Scalar>
int UNet<Scalar>::skip_junctions() const {
  int n = 0;
  for (const auto& d : impl_->decoder) n += d.has_skip ? 1 : 0;
  return n;
}

template <typename Scalar>
Tensor<Scalar> UNet<Scalar>::forward(const Tensor<Scalar>& batch, NormMode mode, bool keep) {
  const Shape& s = batch.shape();
  const int f = config_.downsampling_factor();
  if (s.c != config_.input_channels)
    throw ShapeError("unet: expected " + std::to_string(config_.input_channels) + " input channels");
  if (s.n < 1 || s.h < f || s.w < f || s.h % f != 0 || s.w % f != 0)
    throw ShapeError("unet: input " + s.str() + " must be a positive multiple of " + std::to_string(f));
  auto& m = *impl_;
  m.skips.clear();
  Tensor<Scalar> h = relu_forward(m.stem.forward(batch, mode, keep));
  if (keep) m.stem_act = h;
  m.skips.push_back(h);
  for (std::size_t st = 0; st < m.encoder.size(); ++st) {
    for (auto& block : m.encoder[st]) h = block.forward(h, mode, keep);
    if (st + 1 < m.encoder.size()) m.skips.push_back(h);
  }
  for (std::size_t d = 0; d < m.decoder.size(); ++d) {
    const auto level = m.decoder.size() - 1 - d;
    h = m.decoder[d].forward(h, &m.skips[level], mode, keep);
  }
  if (m.top) h = m.top->forward(h, nullptr, mode, keep);
  logits_ = m.head.forward(h, keep);
  if (!keep) m.skips.clear();
  output_ = sigmoid_forward(logits_);
  return output_;
}

template <typename Scalar>
void UNet<Scalar>::backward(const Tensor<Scalar>& grad_output) {
  require_shape(grad_output, output_.shape(), "unet backward");
  auto& m = *impl_;
  Tensor<Scalar> g = m.head.backward(sigmoid_backward(output_, grad_output));
  if (m.top) g = m.top->backward(g).first;
  std::vector<Tensor<Scalar>> skip_grads(m.skips.size());
  for (std::size_t d = m.decoder.size(); d-- > 0;) {
    const auto level = m.decoder.size() - 1 - d;
    auto [below, skip] = m.decoder[d].backward(g);
    skip_grads[level] = std::move(skip);
    g = std::move(below);
  }
  for (std::size_t st = m.encoder.size(); st-- > 0;) {
    if (st + 1 < m.encoder.size()) g.values() += skip_grads[st + 1].values();
    for (std::size_t b = m.encoder[st].size(); b-- > 0;) g = m.encoder[st][b].backward(g);
  }
  g.values() += skip_grads[0].values();
  m.stem.backward(relu_backward(m.stem_act, g));
}

template class UNet<float>;
template class UNet<double>;

}  // namespace lctem
