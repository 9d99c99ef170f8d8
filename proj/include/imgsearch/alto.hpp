#pragma once

// ALTO-XML layout ingestion: pages, layout blocks and the graphical-element
// records that feed the rest of the pipeline.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace imgsearch {

struct BoundingBox {
    std::int64_t left = 0;
    std::int64_t top = 0;
    std::int64_t width = 1;
    std::int64_t height = 1;

    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

enum class BlockKind { TextBlock, Illustration, GraphicalElement, CompositeBlock };

std::string_view to_string(BlockKind kind) noexcept;

struct LayoutBlock {
    BlockKind kind = BlockKind::TextBlock;
    BoundingBox box;
    std::optional<std::string> text;  // TextBlock only
    std::vector<LayoutBlock> children;  // CompositeBlock only
    bool out_of_bounds = false;
};

/// A block the parser skipped, with the reason.
struct BlockIssue {
    std::size_t byte_offset = 0;
    std::string message;
};

struct AltoPage {
    std::string page_urn;
    std::int64_t page_width = 0;
    std::int64_t page_height = 0;
    std::vector<LayoutBlock> blocks;

    // Parse diagnostics.
    std::size_t unknown_blocks = 0;
    std::vector<BlockIssue> block_errors;
};

struct GraphicalElementRecord {
    std::string element_id;
    std::string page_urn;
    BoundingBox box;
    std::string context_text;

    friend bool operator==(const GraphicalElementRecord&, const GraphicalElementRecord&) = default;
};

/// Parses one ALTO page. Throws ParseError (with byte offset) on malformed XML
/// or when the page has no usable dimensions. Block-level problems are
/// recorded in `block_errors` and the block is skipped.
///
/// The page URN comes from Page@ID or the `fileName` of the source image
/// information when either starts with "URN:"; otherwise it is left empty.
AltoPage parse_alto_page(std::span<const std::uint8_t> xml);
AltoPage parse_alto_page(std::string_view xml);

/// One record per GraphicalElement or Illustration block, CompositeBlocks
/// flattened, in document order.
std::vector<GraphicalElementRecord> extract_elements(const AltoPage& page);

/// All TextBlock contents of the page in document order, whitespace runs
/// collapsed to single spaces, trimmed.
std::string build_context(const AltoPage& page, const LayoutBlock& element);

std::string format_element_id(std::string_view page_urn, const BoundingBox& box);

struct ParsedElementId {
    std::string page_urn;
    BoundingBox box;
};

/// Inverse of format_element_id. Throws ParseError on malformed ids.
ParsedElementId parse_element_id(std::string_view element_id);

/// Result of walking a directory of ALTO pages.
struct IngestResult {
    std::size_t pages = 0;
    std::vector<GraphicalElementRecord> records;
    std::size_t block_errors = 0;
    std::size_t unknown_blocks = 0;
    std::vector<std::string> file_errors;  // "path: message"
};

/// Parses every `.xml` file below `root` (sorted by path). A file without a
/// URN uses its filename stem. Files that fail to parse are reported in
/// `file_errors`; the walk continues.
IngestResult ingest_directory(const std::filesystem::path& root, unsigned jobs = 1);

// elements.jsonl: one object per line with keys element_id, page_urn, left,
// top, width, height, context_text.
void write_elements_jsonl(std::ostream& out, std::span<const GraphicalElementRecord> records);
std::vector<GraphicalElementRecord> read_elements_jsonl(std::istream& in);
std::vector<GraphicalElementRecord> read_elements_jsonl(const std::filesystem::path& path);

}  // namespace imgsearch
