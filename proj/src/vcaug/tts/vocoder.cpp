#include "vcaug/tts/vocoder.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <numbers>

#include "vcaug/error.hpp"

namespace vcaug::tts {

namespace {

double HzToMel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double MelToHz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Triangular filterbank, bands x bins.
std::vector<std::vector<double>> Filterbank(int bands, int bins, double sample_rate) {
  const double top = HzToMel(sample_rate / 2.0);
  std::vector<double> edges(static_cast<size_t>(bands) + 2);
  for (size_t i = 0; i < edges.size(); ++i) {
    edges[i] = MelToHz(top * static_cast<double>(i) / static_cast<double>(bands + 1));
  }
  const double bin_hz = sample_rate / (2.0 * (bins - 1));
  std::vector<std::vector<double>> fb(static_cast<size_t>(bands), std::vector<double>(bins, 0.0));
  for (int b = 0; b < bands; ++b) {
    const double lo = edges[b], mid = edges[b + 1], hi = edges[b + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = k * bin_hz;
      double w = 0.0;
      if (f > lo && f <= mid) w = (f - lo) / (mid - lo);
      else if (f > mid && f < hi) w = (hi - f) / (hi - mid);
      fb[b][k] = w;
    }
  }
  return fb;
}

class Fft {
 public:
  explicit Fft(int n) : n_(n) {
    time_ = fftw_alloc_real(n);
    freq_ = fftw_alloc_complex(n / 2 + 1);
    forward_ = fftw_plan_dft_r2c_1d(n, time_, freq_, FFTW_ESTIMATE);
    inverse_ = fftw_plan_dft_c2r_1d(n, freq_, time_, FFTW_ESTIMATE);
  }
  ~Fft() {
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(inverse_);
    fftw_free(time_);
    fftw_free(freq_);
  }
  Fft(const Fft&) = delete;
  Fft& operator=(const Fft&) = delete;

  void Forward(const std::vector<double>& in, std::vector<std::complex<double>>& out) {
    std::copy(in.begin(), in.end(), time_);
    fftw_execute(forward_);
    out.resize(static_cast<size_t>(n_ / 2 + 1));
    for (size_t k = 0; k < out.size(); ++k) out[k] = {freq_[k][0], freq_[k][1]};
  }
  void Inverse(const std::vector<std::complex<double>>& in, std::vector<double>& out) {
    for (size_t k = 0; k < in.size(); ++k) {
      freq_[k][0] = in[k].real();
      freq_[k][1] = in[k].imag();
    }
    fftw_execute(inverse_);
    out.assign(time_, time_ + n_);
    for (double& v : out) v /= n_;
  }

 private:
  int n_;
  double* time_;
  fftw_complex* freq_;
  fftw_plan forward_;
  fftw_plan inverse_;
};

}  // namespace

std::vector<float> MelToWaveform(const corpus::Mel& mel, const corpus::FeatureConfig& features,
                                 const VocoderOptions& options) {
  features.Validate();
  if (mel.cols() != features.mel_bands) throw ContractError("vocoder: mel band mismatch");
  if (mel.rows() == 0) return {};
  const int hop = static_cast<int>(std::lround(features.sample_rate * features.frame_shift_ms / 1000.0));
  const int win = static_cast<int>(std::lround(features.sample_rate * features.frame_length_ms / 1000.0));
  int n_fft = 1;
  while (n_fft < win) n_fft *= 2;
  const int bins = n_fft / 2 + 1;
  const int frames = static_cast<int>(mel.rows());
  const auto fb = Filterbank(features.mel_bands, bins, features.sample_rate);

  // Linear magnitudes by normalised transpose of the filterbank.
  std::vector<std::vector<double>> mag(frames, std::vector<double>(bins, 0.0));
  std::vector<double> norm(bins, 0.0);
  for (int b = 0; b < features.mel_bands; ++b) {
    for (int k = 0; k < bins; ++k) norm[k] += fb[b][k];
  }
  for (int t = 0; t < frames; ++t) {
    for (int b = 0; b < features.mel_bands; ++b) {
      const double a = std::pow(10.0, options.log_range * (std::clamp<double>(mel(t, b), 0.0, 1.0) - 1.0));
      for (int k = 0; k < bins; ++k) mag[t][k] += fb[b][k] * a;
    }
    for (int k = 0; k < bins; ++k) {
      if (norm[k] > 0.0) mag[t][k] /= norm[k];
    }
  }

  std::vector<double> window(n_fft, 0.0);
  const int offset = (n_fft - win) / 2;
  for (int i = 0; i < win; ++i) {
    window[offset + i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / win);
  }
  const int length = (frames - 1) * hop + n_fft;
  std::vector<double> wsum(length, 0.0);
  for (int t = 0; t < frames; ++t) {
    for (int i = 0; i < n_fft; ++i) wsum[t * hop + i] += window[i] * window[i];
  }

  Fft fft(n_fft);
  std::vector<std::vector<std::complex<double>>> spec(frames);
  for (int t = 0; t < frames; ++t) {
    spec[t].resize(bins);
    for (int k = 0; k < bins; ++k) spec[t][k] = mag[t][k];
  }
  std::vector<double> signal(length, 0.0);
  std::vector<double> buf;
  std::vector<std::complex<double>> fbuf;
  for (int it = 0; it <= options.iterations; ++it) {
    std::fill(signal.begin(), signal.end(), 0.0);
    for (int t = 0; t < frames; ++t) {
      fft.Inverse(spec[t], buf);
      for (int i = 0; i < n_fft; ++i) signal[t * hop + i] += buf[i] * window[i];
    }
    for (int i = 0; i < length; ++i) {
      if (wsum[i] > 1e-8) signal[i] /= wsum[i];
    }
    if (it == options.iterations) break;
    for (int t = 0; t < frames; ++t) {
      std::vector<double> seg(n_fft);
      for (int i = 0; i < n_fft; ++i) seg[i] = signal[t * hop + i] * window[i];
      fft.Forward(seg, fbuf);
      for (int k = 0; k < bins; ++k) {
        const double a = std::abs(fbuf[k]);
        spec[t][k] = a > 1e-12 ? fbuf[k] / a * mag[t][k] : std::complex<double>(mag[t][k], 0.0);
      }
    }
  }
  // Keep frames * hop samples around the frame centres so the audio lasts
  // as long as the mel.
  const int start = (n_fft - hop) / 2;
  const int keep = frames * hop;
  double peak = 0.0;
  for (int i = 0; i < keep; ++i) peak = std::max(peak, std::abs(signal[start + i]));
  const double gain = peak > 0.0 ? 0.9 / peak : 1.0;
  std::vector<float> out(keep);
  for (int i = 0; i < keep; ++i) out[i] = static_cast<float>(signal[start + i] * gain);
  return out;
}

void WriteWav(const std::string& path, const std::vector<float>& samples, int sample_rate) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  auto u32 = [&](uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); };
  auto u16 = [&](uint16_t v) { f.write(reinterpret_cast<const char*>(&v), 2); };
  const uint32_t data_bytes = static_cast<uint32_t>(samples.size() * 2);
  f.write("RIFF", 4);
  u32(36 + data_bytes);
  f.write("WAVEfmt ", 8);
  u32(16);
  u16(1);
  u16(1);
  u32(static_cast<uint32_t>(sample_rate));
  u32(static_cast<uint32_t>(sample_rate * 2));
  u16(2);
  u16(16);
  f.write("data", 4);
  u32(data_bytes);
  for (float s : samples) {
    const auto v = static_cast<int16_t>(std::lround(std::clamp(s, -1.0f, 1.0f) * 32767.0f));
    u16(static_cast<uint16_t>(v));
  }
  if (!f) throw IoError("write failed for '" + path + "'");
}

}  // namespace vcaug::tts
