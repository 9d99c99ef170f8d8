#pragma once

// Small ALTO page builders for parser and CLI tests.

#include <sstream>
#include <string>

namespace testgen {

inline std::string alto_page(const std::string& body, const std::string& id = "URN:NBN:no-nb_digibok_2009070210001_0618") {
    return "<?xml version=\"1.0\"?><alto xmlns=\"http://www.loc.gov/standards/alto/ns-v3#\"><Layout>"
           "<Page ID=\"" + id + "\" WIDTH=\"3000\" HEIGHT=\"4000\"><PrintSpace>" + body +
           "</PrintSpace></Page></Layout></alto>";
}

inline std::string alto_text_block(const std::string& words, int x = 10) {
    std::string s = "<TextBlock HPOS=\"" + std::to_string(x) + "\" VPOS=\"10\" WIDTH=\"100\" HEIGHT=\"20\"><TextLine>";
    std::istringstream ss(words);
    std::string w;
    while (ss >> w) s += "<String CONTENT=\"" + w + "\"/>";
    return s + "</TextLine></TextBlock>";
}

inline std::string alto_graphic(int l, int t, int w, int h, const char* tag = "GraphicalElement") {
    return std::string("<") + tag + " HPOS=\"" + std::to_string(l) + "\" VPOS=\"" + std::to_string(t) +
           "\" WIDTH=\"" + std::to_string(w) + "\" HEIGHT=\"" + std::to_string(h) + "\"/>";
}

}  // namespace testgen
