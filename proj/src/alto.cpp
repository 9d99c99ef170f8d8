#include "imgsearch/alto.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <memory>
#include <type_traits>
#include <ostream>
#include <set>
#include <sstream>

#include <expat.h>
#include <json.hpp>

#include "imgsearch/error.hpp"
#include "imgsearch/parallel.hpp"

namespace imgsearch {

std::string_view to_string(BlockKind kind) noexcept {
    switch (kind) {
        case BlockKind::TextBlock: return "TextBlock";
        case BlockKind::Illustration: return "Illustration";
        case BlockKind::GraphicalElement: return "GraphicalElement";
        case BlockKind::CompositeBlock: return "CompositeBlock";
    }
    return "?";
}

namespace {

std::string_view local_name(const XML_Char* name) {
    std::string_view n(name);
    if (auto colon = n.rfind(':'); colon != std::string_view::npos) n.remove_prefix(colon + 1);
    return n;
}

const XML_Char* find_attr(const XML_Char** attrs, std::string_view key) {
    for (; attrs && *attrs; attrs += 2) {
        if (local_name(attrs[0]) == key) return attrs[1];
    }
    return nullptr;
}

std::optional<BlockKind> block_kind(std::string_view name) {
    if (name == "TextBlock") return BlockKind::TextBlock;
    if (name == "Illustration") return BlockKind::Illustration;
    if (name == "GraphicalElement") return BlockKind::GraphicalElement;
    // ALTO spells it ComposedBlock; accept both.
    if (name == "ComposedBlock" || name == "CompositeBlock") return BlockKind::CompositeBlock;
    return std::nullopt;
}

bool is_page_container(std::string_view name) {
    return name == "PrintSpace" || name == "TopMargin" || name == "LeftMargin" ||
           name == "RightMargin" || name == "BottomMargin";
}

/// Parses a non-negative pixel coordinate; ALTO producers sometimes write decimals.
std::optional<std::int64_t> parse_coord(const XML_Char* value) {
    if (!value) return std::nullopt;
    char* end = nullptr;
    const double v = std::strtod(value, &end);
    if (end == value || *end != '\0' || !std::isfinite(v)) return std::nullopt;
    const auto rounded = std::llround(v);
    if (rounded < 0) return std::nullopt;
    return rounded;
}

bool starts_with_urn(std::string_view s) { return s.size() > 4 && s.substr(0, 4) == "URN:"; }

enum class Frame { Other, Page, Container, Block, Skip, FileName };

struct SaxState {
    XML_Parser parser = nullptr;
    AltoPage page;
    bool page_seen = false;
    bool in_page = false;
    std::vector<Frame> frames;
    std::vector<LayoutBlock> open;  // innermost open block at back
    std::string file_name;
    std::string error;
    std::size_t error_offset = 0;

    std::size_t offset() const { return static_cast<std::size_t>(XML_GetCurrentByteIndex(parser)); }

    void fail(std::string message) {
        if (error.empty()) {
            error = std::move(message);
            error_offset = offset();
        }
        XML_StopParser(parser, XML_FALSE);
    }

    bool inside_skip() const {
        return std::find(frames.begin(), frames.end(), Frame::Skip) != frames.end();
    }

    /// True when the current position may contain layout blocks.
    bool block_context() const {
        if (!in_page || frames.empty()) return false;
        const Frame top = frames.back();
        if (top == Frame::Page || top == Frame::Container) return true;
        return top == Frame::Block && !open.empty() && open.back().kind == BlockKind::CompositeBlock;
    }
};

void on_start(void* user, const XML_Char* name, const XML_Char** attrs) {
    auto& st = *static_cast<SaxState*>(user);
    const std::string_view tag = local_name(name);

    if (st.inside_skip()) {
        st.frames.push_back(Frame::Skip);
        return;
    }
    if (tag == "Page") {
        if (st.page_seen) {
            st.fail("multiple Page elements in one file are not supported");
            return;
        }
        st.page_seen = true;
        st.in_page = true;
        const auto w = parse_coord(find_attr(attrs, "WIDTH"));
        const auto h = parse_coord(find_attr(attrs, "HEIGHT"));
        if (!w || !h || *w <= 0 || *h <= 0) {
            st.fail("Page element lacks positive WIDTH/HEIGHT");
            return;
        }
        st.page.page_width = *w;
        st.page.page_height = *h;
        if (const auto* id = find_attr(attrs, "ID"); id && starts_with_urn(id)) st.page.page_urn = id;
        st.frames.push_back(Frame::Page);
        return;
    }
    if (!st.in_page) {
        st.frames.push_back(tag == "fileName" ? Frame::FileName : Frame::Other);
        return;
    }
    if (st.block_context()) {
        if (is_page_container(tag)) {
            st.frames.push_back(Frame::Container);
            return;
        }
        const auto kind = block_kind(tag);
        if (!kind) {
            ++st.page.unknown_blocks;
            st.frames.push_back(Frame::Skip);
            return;
        }
        LayoutBlock block;
        block.kind = *kind;
        static constexpr const char* coord_names[] = {"HPOS", "VPOS", "WIDTH", "HEIGHT"};
        std::int64_t coords[4] = {};
        for (int i = 0; i < 4; ++i) {
            const auto v = parse_coord(find_attr(attrs, coord_names[i]));
            if (!v) {
                st.page.block_errors.push_back(
                    {st.offset(), std::string(tag) + ": missing or invalid " + coord_names[i]});
                st.frames.push_back(Frame::Skip);
                return;
            }
            coords[i] = *v;
        }
        block.box = {coords[0], coords[1], coords[2], coords[3]};
        if (block.box.width < 1 || block.box.height < 1) {
            st.page.block_errors.push_back({st.offset(), std::string(tag) + ": zero width or height"});
            st.frames.push_back(Frame::Skip);
            return;
        }
        block.out_of_bounds = block.box.left + block.box.width > st.page.page_width ||
                              block.box.top + block.box.height > st.page.page_height;
        if (block.kind == BlockKind::TextBlock) block.text.emplace();
        st.open.push_back(std::move(block));
        st.frames.push_back(Frame::Block);
        return;
    }
    // Inside a leaf block: collect words of text blocks, ignore the rest.
    if (tag == "String" && !st.open.empty() && st.open.back().text) {
        if (const auto* content = find_attr(attrs, "CONTENT"); content && *content) {
            std::string& text = *st.open.back().text;
            if (!text.empty()) text += ' ';
            text += content;
        }
    }
    st.frames.push_back(Frame::Other);
}

void on_end(void* user, const XML_Char*) {
    auto& st = *static_cast<SaxState*>(user);
    if (st.frames.empty()) return;
    const Frame frame = st.frames.back();
    st.frames.pop_back();
    if (frame == Frame::Page) {
        st.in_page = false;
    } else if (frame == Frame::Block) {
        LayoutBlock done = std::move(st.open.back());
        st.open.pop_back();
        if (done.kind == BlockKind::CompositeBlock && done.children.empty()) {
            // A composite with no valid children cannot be represented.
            st.page.block_errors.push_back({st.offset(), "ComposedBlock without valid children"});
            return;
        }
        if (st.open.empty()) {
            st.page.blocks.push_back(std::move(done));
        } else {
            st.open.back().children.push_back(std::move(done));
        }
    }
}

void on_chars(void* user, const XML_Char* s, int len) {
    auto& st = *static_cast<SaxState*>(user);
    if (!st.frames.empty() && st.frames.back() == Frame::FileName) st.file_name.append(s, len);
}

std::string collapse_whitespace(std::string_view in) {
    std::string out;
    out.reserve(in.size());
    bool pending_space = false;
    for (char c : in) {
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
            pending_space = !out.empty();
        } else {
            if (pending_space) out += ' ';
            pending_space = false;
            out += c;
        }
    }
    return out;
}

void collect_text(const std::vector<LayoutBlock>& blocks, std::string& out) {
    for (const auto& b : blocks) {
        if (b.kind == BlockKind::TextBlock && b.text) {
            out += ' ';
            out += *b.text;
        }
        collect_text(b.children, out);
    }
}

void collect_elements(const AltoPage& page, const std::vector<LayoutBlock>& blocks,
                      const std::string& context, std::vector<GraphicalElementRecord>& out) {
    for (const auto& b : blocks) {
        if (b.kind == BlockKind::GraphicalElement || b.kind == BlockKind::Illustration) {
            out.push_back({format_element_id(page.page_urn, b.box), page.page_urn, b.box, context});
        }
        collect_elements(page, b.children, context, out);
    }
}

}  // namespace

AltoPage parse_alto_page(std::span<const std::uint8_t> xml) {
    SaxState st;
    std::unique_ptr<std::remove_pointer_t<XML_Parser>, decltype(&XML_ParserFree)> parser(
        XML_ParserCreate(nullptr), &XML_ParserFree);
    if (!parser) throw Error("failed to allocate XML parser");
    st.parser = parser.get();
    XML_SetUserData(st.parser, &st);
    XML_SetElementHandler(st.parser, on_start, on_end);
    XML_SetCharacterDataHandler(st.parser, on_chars);

    const auto status = XML_Parse(st.parser, reinterpret_cast<const char*>(xml.data()),
                                  static_cast<int>(xml.size()), XML_TRUE);
    if (!st.error.empty()) throw ParseError(st.error, st.error_offset);
    if (status != XML_STATUS_OK) {
        const auto offset = static_cast<std::size_t>(XML_GetCurrentByteIndex(st.parser));
        throw ParseError(std::string("malformed XML: ") + XML_ErrorString(XML_GetErrorCode(st.parser)) +
                             " at byte " + std::to_string(offset),
                         offset);
    }
    if (!st.page_seen) throw ParseError("no Page element found", 0);

    if (st.page.page_urn.empty()) {
        std::string name = collapse_whitespace(st.file_name);
        if (starts_with_urn(name)) {
            if (auto dot = name.rfind('.'); dot != std::string::npos && dot > name.rfind(':')) {
                name.resize(dot);
            }
            st.page.page_urn = std::move(name);
        }
    }
    return std::move(st.page);
}

AltoPage parse_alto_page(std::string_view xml) {
    return parse_alto_page(std::span<const std::uint8_t>(
        reinterpret_cast<const std::uint8_t*>(xml.data()), xml.size()));
}

std::string build_context(const AltoPage& page, const LayoutBlock&) {
    std::string raw;
    collect_text(page.blocks, raw);
    return collapse_whitespace(raw);
}

std::vector<GraphicalElementRecord> extract_elements(const AltoPage& page) {
    std::vector<GraphicalElementRecord> out;
    const std::string context = build_context(page, LayoutBlock{});
    collect_elements(page, page.blocks, context, out);
    return out;
}

std::string format_element_id(std::string_view page_urn, const BoundingBox& box) {
    std::string id(page_urn);
    id += ':';
    id += std::to_string(box.left) + ',' + std::to_string(box.top) + ',' +
          std::to_string(box.width) + ',' + std::to_string(box.height);
    return id;
}

ParsedElementId parse_element_id(std::string_view element_id) {
    const auto colon = element_id.rfind(':');
    if (colon == std::string_view::npos) throw ParseError("element id lacks ':' separator");
    ParsedElementId out;
    out.page_urn = std::string(element_id.substr(0, colon));
    std::string_view rest = element_id.substr(colon + 1);
    std::int64_t values[4];
    for (int i = 0; i < 4; ++i) {
        const auto comma = rest.find(',');
        const std::string_view part = i < 3 ? rest.substr(0, comma) : rest;
        if ((i < 3 && comma == std::string_view::npos) || part.empty() ||
            !std::all_of(part.begin(), part.end(), [](char c) { return c >= '0' && c <= '9'; })) {
            throw ParseError("malformed element id box: " + std::string(element_id));
        }
        values[i] = std::stoll(std::string(part));
        if (i < 3) rest.remove_prefix(comma + 1);
    }
    out.box = {values[0], values[1], values[2], values[3]};
    return out;
}

IngestResult ingest_directory(const std::filesystem::path& root, unsigned jobs) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(root)) throw IoError("not a directory: " + root.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (ext == ".xml") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());

    struct Slot {
        std::optional<AltoPage> page;
        std::string error;
    };
    std::vector<Slot> slots(files.size());
    parallel_for(files.size(), jobs, [&](std::size_t i) {
        std::ifstream in(files[i], std::ios::binary);
        const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        if (!in && !in.eof()) {
            slots[i].error = files[i].string() + ": read failed";
            return;
        }
        try {
            slots[i].page = parse_alto_page(std::string_view(bytes));
            if (slots[i].page->page_urn.empty()) slots[i].page->page_urn = files[i].stem().string();
        } catch (const ParseError& e) {
            slots[i].error = files[i].string() + ": " + e.what();
        }
    });

    IngestResult result;
    std::set<std::string> seen;
    for (auto& slot : slots) {
        if (!slot.page) {
            result.file_errors.push_back(std::move(slot.error));
            continue;
        }
        ++result.pages;
        result.block_errors += slot.page->block_errors.size();
        result.unknown_blocks += slot.page->unknown_blocks;
        for (auto& rec : extract_elements(*slot.page)) {
            if (!seen.insert(rec.element_id).second) {
                ++result.block_errors;  // same (urn, box) twice in the collection
                continue;
            }
            result.records.push_back(std::move(rec));
        }
    }
    return result;
}

void write_elements_jsonl(std::ostream& out, std::span<const GraphicalElementRecord> records) {
    for (const auto& r : records) {
        nlohmann::ordered_json j;
        j["element_id"] = r.element_id;
        j["page_urn"] = r.page_urn;
        j["left"] = r.box.left;
        j["top"] = r.box.top;
        j["width"] = r.box.width;
        j["height"] = r.box.height;
        j["context_text"] = r.context_text;
        out << j.dump() << '\n';
    }
}

std::vector<GraphicalElementRecord> read_elements_jsonl(std::istream& in) {
    std::vector<GraphicalElementRecord> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            GraphicalElementRecord r;
            r.element_id = j.at("element_id").get<std::string>();
            r.page_urn = j.at("page_urn").get<std::string>();
            r.box = {j.at("left").get<std::int64_t>(), j.at("top").get<std::int64_t>(),
                     j.at("width").get<std::int64_t>(), j.at("height").get<std::int64_t>()};
            r.context_text = j.value("context_text", std::string{});
            out.push_back(std::move(r));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("elements line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

std::vector<GraphicalElementRecord> read_elements_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    return read_elements_jsonl(in);
}

}  // namespace imgsearch
