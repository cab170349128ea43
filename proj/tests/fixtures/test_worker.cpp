// Frame-protocol worker used by the process tests.
//   test_worker --profile identity|argmax|crash|hang|garbage|wrong_hook|error [--log FILE]
// Every profile answers lifecycle hooks by echoing them; the profile only
// changes what happens on preprocess/postprocess. --log appends one hook name
// per request.

#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include "mlharness/frame.hpp"

namespace {

bool read_exact(std::uint8_t* dst, std::size_t n) {
  while (n > 0) {
    const auto got = ::read(STDIN_FILENO, dst, n);
    if (got <= 0) return false;
    dst += got;
    n -= static_cast<std::size_t>(got);
  }
  return true;
}

void write_all(const std::vector<std::uint8_t>& bytes) {
  std::size_t off = 0;
  while (off < bytes.size()) {
    const auto n = ::write(STDOUT_FILENO, bytes.data() + off, bytes.size() - off);
    if (n <= 0) std::_Exit(4);
    off += static_cast<std::size_t>(n);
  }
}

mlh::TensorList argmax(const mlh::TensorList& in) {
  if (in.empty() || in[0].dtype() != mlh::ElementType::Float32) return in;
  const auto v = in[0].values<float>();
  const std::int64_t idx = v.empty() ? 0 : std::max_element(v.begin(), v.end()) - v.begin();
  return {mlh::Tensor::from_values<std::int64_t>({1}, std::vector<std::int64_t>{idx})};
}

}  // namespace

int main(int argc, char** argv) {
  std::string profile = "identity";
  std::string log_path;
  for (int i = 1; i + 1 < argc; i += 2) {
    const std::string flag = argv[i];
    if (flag == "--profile") profile = argv[i + 1];
    if (flag == "--log") log_path = argv[i + 1];
  }

  for (;;) {
    std::vector<std::uint8_t> frame(4);
    if (!read_exact(frame.data(), 4)) return 0;
    std::uint32_t len = 0;
    std::memcpy(&len, frame.data(), 4);
    frame.resize(4 + static_cast<std::size_t>(len));
    if (!read_exact(frame.data() + 4, len)) return 0;

    mlh::Frame request;
    try {
      request = mlh::decode_frame(frame);
    } catch (const mlh::Error& e) {
      const std::uint8_t hook = len > 0 ? frame[4] : 0;
      write_all(mlh::encode_frame({}, {{"error", e.what()}},
                                  static_cast<mlh::HookId>(std::min<std::uint8_t>(hook, 5))));
      continue;
    }
    if (!log_path.empty()) {
      std::ofstream(log_path, std::ios::app) << mlh::hook_name(request.hook) << "\n";
    }

    if (!mlh::hook_carries_data(request.hook) || profile == "identity") {
      write_all(mlh::encode_frame(request.tensors, request.ctx, request.hook));
      continue;
    }
    if (profile == "argmax") {
      const auto out = request.hook == mlh::HookId::Postprocess ? argmax(request.tensors)
                                                                : request.tensors;
      write_all(mlh::encode_frame(out, {}, request.hook));
    } else if (profile == "crash") {
      std::_Exit(3);
    } else if (profile == "hang") {
      std::this_thread::sleep_for(std::chrono::hours(1));
    } else if (profile == "garbage") {
      write_all({0x05, 0x00, 0x00, 0x00, 0xff, 0xff, 0xff, 0xff, 0xff});
    } else if (profile == "wrong_hook") {
      const auto other = request.hook == mlh::HookId::Preprocess ? mlh::HookId::Postprocess
                                                                 : mlh::HookId::Preprocess;
      write_all(mlh::encode_frame(request.tensors, {}, other));
    } else if (profile == "error") {
      write_all(mlh::encode_frame({}, {{"error", "refused"}}, request.hook));
    } else {
      std::fprintf(stderr, "unknown profile %s\n", profile.c_str());
      return 2;
    }
  }
}
