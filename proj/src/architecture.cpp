#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "ftcnn/error.hpp"
#include "ftcnn/nn.hpp"

namespace ftcnn {

namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

bool isEmptyCell(const std::string& cell) {
  const auto l = lower(cell);
  return l.empty() || l == "n/a" || l == "-" || l == "none";
}

std::vector<std::string> splitCells(std::string_view line) {
  std::string s = trim(line);
  if (!s.empty() && s.front() == '|') s.erase(0, 1);
  if (!s.empty() && s.back() == '|') s.pop_back();
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    auto bar = s.find('|', start);
    cells.push_back(trim(std::string_view(s).substr(start, bar - start)));
    if (bar == std::string::npos) break;
    start = bar + 1;
  }
  return cells;
}

LayerKind parseKind(const std::string& cell, std::size_t line) {
  const auto k = lower(cell);
  if (k == "input" || k == "data") return LayerKind::Input;
  if (k == "convolution" || k == "conv") return LayerKind::Convolution;
  if (k == "max pooling" || k == "max-pool" || k == "maxpool" || k == "max pool" ||
      k == "pooling") {
    return LayerKind::MaxPool;
  }
  if (k == "fully connected" || k == "fully-connected" || k == "fc" || k == "dense") {
    return LayerKind::FullyConnected;
  }
  if (k == "relu") return LayerKind::Relu;
  if (k == "softmax") return LayerKind::Softmax;
  throw ArchitectureError("line " + std::to_string(line) + ": unknown layer type '" + cell + "'");
}

std::size_t parseCount(const std::string& cell, std::size_t line, const char* what) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(cell, &used);
    if (used != cell.size()) throw std::invalid_argument(cell);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw ArchitectureError("line " + std::to_string(line) + ": bad " + what + " '" + cell + "'");
  }
}

Shape parseExtents(const std::string& cell, std::size_t line,
                   std::optional<std::size_t> classCount) {
  Shape shape;
  std::size_t start = 0;
  while (true) {
    auto x = cell.find_first_of("xX*", start);
    auto part = trim(std::string_view(cell).substr(start, x - start));
    if (part == "C") {
      if (!classCount) {
        throw ArchitectureError("line " + std::to_string(line) +
                                ": table uses the class-count symbol C but no class count was given");
      }
      shape.push_back(*classCount);
    } else {
      shape.push_back(parseCount(part, line, "extent"));
    }
    if (x == std::string::npos) break;
    start = x + 1;
  }
  return shape;
}

std::string extentsToString(const Shape& s) { return shapeToString(s); }

std::size_t convOut(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad,
                    const LayerRow& row) {
  const long long span = static_cast<long long>(in) + 2 * static_cast<long long>(pad) -
                         static_cast<long long>(kernel);
  if (span < 0 || stride == 0) {
    throw ArchitectureError("layer " + row.name + ": kernel " + std::to_string(kernel) +
                            " does not fit input extent " + std::to_string(in) + " with pad " +
                            std::to_string(pad));
  }
  return static_cast<std::size_t>(span) / stride + 1;
}

Shape inferRow(const LayerRow& row) {
  switch (row.kind) {
    case LayerKind::Input:
      return row.inShape;
    case LayerKind::Relu:
    case LayerKind::Softmax:
      return row.inShape;
    case LayerKind::Convolution:
    case LayerKind::MaxPool: {
      if (row.inShape.size() != 3) {
        throw ArchitectureError("layer " + row.name + " needs a CxHxW input, got " +
                                extentsToString(row.inShape));
      }
      if (!row.kernel || !row.stride) {
        throw ArchitectureError("layer " + row.name + " needs kernel and stride");
      }
      const std::size_t pad = row.pad.value_or(0);
      std::size_t channels = row.inShape[0];
      if (row.kind == LayerKind::Convolution) {
        if (!row.outChannels || *row.outChannels == 0) {
          throw ArchitectureError("convolution " + row.name + " needs a positive kernel count");
        }
        channels = *row.outChannels;
      }
      return {channels, convOut(row.inShape[1], row.kernel->h, *row.stride, pad, row),
              convOut(row.inShape[2], row.kernel->w, *row.stride, pad, row)};
    }
    case LayerKind::FullyConnected: {
      if (!row.outChannels || *row.outChannels == 0) {
        throw ArchitectureError("fully-connected " + row.name + " needs a positive output count");
      }
      if (row.kernel) {
        Kernel expected{1, 1};
        if (row.inShape.size() == 3) expected = {row.inShape[1], row.inShape[2]};
        if (!(*row.kernel == expected)) {
          throw ArchitectureError("fully-connected " + row.name + " kernel must cover its input (" +
                                  std::to_string(expected.h) + "x" + std::to_string(expected.w) +
                                  ")");
        }
      }
      return {*row.outChannels, 1};
    }
  }
  throw ArchitectureError("unreachable layer kind");
}

}  // namespace

std::string_view kindName(LayerKind kind) {
  switch (kind) {
    case LayerKind::Input: return "input";
    case LayerKind::Convolution: return "convolution";
    case LayerKind::MaxPool: return "max pooling";
    case LayerKind::FullyConnected: return "fully connected";
    case LayerKind::Relu: return "relu";
    case LayerKind::Softmax: return "softmax";
  }
  return "?";
}

bool isTrainable(LayerKind kind) {
  return kind == LayerKind::Convolution || kind == LayerKind::FullyConnected;
}

const Shape& ArchitectureSpec::inputShape() const {
  if (rows.empty() || rows.front().kind != LayerKind::Input) {
    throw ArchitectureError("architecture must start with an input row");
  }
  return rows.front().inShape;
}

std::size_t ArchitectureSpec::classCount() const {
  for (auto it = rows.rbegin(); it != rows.rend(); ++it) {
    if (isTrainable(it->kind)) {
      if (it->kind != LayerKind::FullyConnected || !it->outChannels) {
        throw ArchitectureError("last trainable layer must be fully connected");
      }
      return *it->outChannels;
    }
  }
  throw ArchitectureError("architecture has no trainable layer");
}

std::vector<std::string> ArchitectureSpec::trainableLayers() const {
  std::vector<std::string> names;
  for (const auto& r : rows) {
    if (isTrainable(r.kind)) names.push_back(r.name);
  }
  return names;
}

bool ArchitectureSpec::hasExplicitActivations() const {
  return std::any_of(rows.begin(), rows.end(),
                     [](const LayerRow& r) { return r.kind == LayerKind::Relu; });
}

const LayerRow& ArchitectureSpec::row(std::string_view name) const {
  for (const auto& r : rows) {
    if (r.name == name) return r;
  }
  throw ArchitectureError("no layer named '" + std::string(name) + "'");
}

std::vector<Shape> inferShapes(const ArchitectureSpec& spec) {
  if (spec.rows.empty() || spec.rows.front().kind != LayerKind::Input) {
    throw ArchitectureError("first row must be the input");
  }
  std::vector<Shape> outputs;
  outputs.reserve(spec.rows.size());
  std::vector<std::string> seen;
  for (std::size_t i = 0; i < spec.rows.size(); ++i) {
    const auto& row = spec.rows[i];
    if (row.name.empty()) throw ArchitectureError("row " + std::to_string(i) + " has no name");
    if (std::find(seen.begin(), seen.end(), row.name) != seen.end()) {
      throw ArchitectureError("duplicate layer name '" + row.name + "'");
    }
    seen.push_back(row.name);
    if (i > 0 && row.kind == LayerKind::Input) {
      throw ArchitectureError("input row may only appear first");
    }
    for (auto e : row.inShape) {
      if (e == 0) throw ArchitectureError("layer " + row.name + " has a zero input extent");
    }
    if (row.inShape.empty()) throw ArchitectureError("layer " + row.name + " has no input shape");
    if (i > 0 && row.inShape != outputs.back()) {
      throw ArchitectureError("layer " + row.name + " input " + extentsToString(row.inShape) +
                              " does not match previous output " +
                              extentsToString(outputs.back()));
    }
    Shape out = inferRow(row);
    if (row.declaredOutput && *row.declaredOutput != out) {
      throw ArchitectureError("layer " + row.name + " declares output " +
                              extentsToString(*row.declaredOutput) + " but infers " +
                              extentsToString(out));
    }
    outputs.push_back(std::move(out));
  }
  (void)spec.classCount();
  return outputs;
}

ArchitectureSpec parseArchitectureTable(std::string_view text,
                                        std::optional<std::size_t> classCount) {
  static const std::vector<std::string> kColumns = {"layer",  "type", "input", "kernel",
                                                    "stride", "pad",  "output"};
  ArchitectureSpec spec;
  bool headerSeen = false;
  bool hasOutput = false;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    auto cells = splitCells(t);
    if (!headerSeen) {
      std::vector<std::string> header;
      for (auto& c : cells) header.push_back(lower(c));
      const bool withOutput = header == kColumns;
      const bool withoutOutput =
          header == std::vector<std::string>(kColumns.begin(), kColumns.end() - 1);
      if (!withOutput && !withoutOutput) {
        throw ArchitectureError("line " + std::to_string(lineNo) +
                                ": header must be 'layer | type | input | kernel | stride | pad | "
                                "output'");
      }
      hasOutput = withOutput;
      headerSeen = true;
      continue;
    }
    const std::size_t expected = hasOutput ? 7 : 6;
    if (cells.size() != expected) {
      throw ArchitectureError("line " + std::to_string(lineNo) + ": expected " +
                              std::to_string(expected) + " columns, got " +
                              std::to_string(cells.size()));
    }
    LayerRow row;
    row.name = cells[0];
    row.kind = parseKind(cells[1], lineNo);
    row.inShape = parseExtents(cells[2], lineNo, classCount);
    if (!isEmptyCell(cells[3])) {
      auto k = parseExtents(cells[3], lineNo, std::nullopt);
      if (k.size() == 1) k.push_back(k[0]);
      if (k.size() != 2) throw ArchitectureError("line " + std::to_string(lineNo) + ": bad kernel");
      row.kernel = Kernel{k[0], k[1]};
    }
    if (!isEmptyCell(cells[4])) row.stride = parseCount(cells[4], lineNo, "stride");
    if (!isEmptyCell(cells[5])) row.pad = parseCount(cells[5], lineNo, "pad");
    if (hasOutput && !isEmptyCell(cells[6])) {
      row.declaredOutput = parseExtents(cells[6], lineNo, classCount);
    }
    if (isTrainable(row.kind)) {
      // The table has no channel column: the kernel count is the output's leading extent.
      if (!row.declaredOutput) {
        throw ArchitectureError("line " + std::to_string(lineNo) + ": layer " + row.name +
                                " needs an output column to give its channel count");
      }
      row.outChannels = row.declaredOutput->front();
    }
    spec.rows.push_back(std::move(row));
  }
  if (!headerSeen) throw ArchitectureError("architecture table is empty");
  inferShapes(spec);
  return spec;
}

ArchitectureSpec loadArchitecture(const std::filesystem::path& path,
                                  std::optional<std::size_t> classCount) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open architecture file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parseArchitectureTable(buf.str(), classCount);
}

std::string formatArchitectureTable(const ArchitectureSpec& spec) {
  const auto outs = inferShapes(spec);
  std::ostringstream out;
  out << "layer | type | input | kernel | stride | pad | output\n";
  for (std::size_t i = 0; i < spec.rows.size(); ++i) {
    const auto& r = spec.rows[i];
    out << r.name << " | " << kindName(r.kind) << " | " << shapeToString(r.inShape) << " | ";
    if (r.kernel) {
      out << r.kernel->h << "x" << r.kernel->w;
    } else {
      out << "N/A";
    }
    out << " | " << (r.stride ? std::to_string(*r.stride) : "N/A") << " | "
        << (r.pad ? std::to_string(*r.pad) : "N/A") << " | " << shapeToString(outs[i]) << "\n";
  }
  return out.str();
}

ArchitectureSpec alexnetSpec(std::size_t classCount) {
  return ArchitectureBuilder({3, 227, 227})
      .conv("conv1", 96, {11, 11}, 4, 0)
      .maxPool("pool1", {3, 3}, 2, 0)
      .conv("conv2", 256, {5, 5}, 1, 2)
      .maxPool("pool2", {3, 3}, 2, 0)
      .conv("conv3", 384, {3, 3}, 1, 1)
      .conv("conv4", 384, {3, 3}, 1, 1)
      .conv("conv5", 256, {3, 3}, 1, 1)
      .maxPool("pool5", {3, 3}, 2, 0)
      .fullyConnected("fc6", 4096)
      .fullyConnected("fc7", 4096)
      .fullyConnected("fc8", classCount)
      .build();
}

ArchitectureSpec withClassCount(const ArchitectureSpec& spec, std::size_t classCount) {
  ArchitectureSpec out = spec;
  for (auto it = out.rows.rbegin(); it != out.rows.rend(); ++it) {
    if (isTrainable(it->kind)) {
      if (it->kind != LayerKind::FullyConnected) {
        throw ArchitectureError("last trainable layer must be fully connected");
      }
      it->outChannels = classCount;
      if (it->declaredOutput) it->declaredOutput = Shape{classCount, 1};
      // Any rows after the head (relu/softmax) carry the class count through.
      for (auto after = it.base(); after != out.rows.end(); ++after) {
        after->inShape = Shape{classCount, 1};
        if (after->declaredOutput) after->declaredOutput = Shape{classCount, 1};
      }
      inferShapes(out);
      return out;
    }
  }
  throw ArchitectureError("architecture has no trainable layer");
}

ArchitectureBuilder::ArchitectureBuilder(Shape input, std::string name) : current_(input) {
  LayerRow row;
  row.name = std::move(name);
  row.kind = LayerKind::Input;
  row.inShape = input;
  row.declaredOutput = std::move(input);
  spec_.rows.push_back(std::move(row));
}

ArchitectureBuilder& ArchitectureBuilder::push(LayerRow row) {
  row.inShape = current_;
  current_ = inferRow(row);
  row.declaredOutput = current_;
  spec_.rows.push_back(std::move(row));
  return *this;
}

ArchitectureBuilder& ArchitectureBuilder::conv(std::string name, std::size_t outChannels,
                                               Kernel kernel, std::size_t stride,
                                               std::size_t pad) {
  LayerRow row;
  row.name = std::move(name);
  row.kind = LayerKind::Convolution;
  row.kernel = kernel;
  row.stride = stride;
  row.pad = pad;
  row.outChannels = outChannels;
  return push(std::move(row));
}

ArchitectureBuilder& ArchitectureBuilder::maxPool(std::string name, Kernel kernel,
                                                  std::size_t stride, std::size_t pad) {
  LayerRow row;
  row.name = std::move(name);
  row.kind = LayerKind::MaxPool;
  row.kernel = kernel;
  row.stride = stride;
  row.pad = pad;
  return push(std::move(row));
}

ArchitectureBuilder& ArchitectureBuilder::fullyConnected(std::string name,
                                                         std::size_t outChannels) {
  LayerRow row;
  row.name = std::move(name);
  row.kind = LayerKind::FullyConnected;
  row.kernel = current_.size() == 3 ? Kernel{current_[1], current_[2]} : Kernel{1, 1};
  row.stride = 1;
  row.pad = 0;
  row.outChannels = outChannels;
  return push(std::move(row));
}

ArchitectureBuilder& ArchitectureBuilder::relu(std::string name) {
  LayerRow row;
  row.name = std::move(name);
  row.kind = LayerKind::Relu;
  return push(std::move(row));
}

ArchitectureBuilder& ArchitectureBuilder::softmax(std::string name) {
  LayerRow row;
  row.name = std::move(name);
  row.kind = LayerKind::Softmax;
  return push(std::move(row));
}

ArchitectureSpec ArchitectureBuilder::build() const {
  inferShapes(spec_);
  return spec_;
}

}  // namespace ftcnn
