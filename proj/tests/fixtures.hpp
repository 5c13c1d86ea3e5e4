#pragma once

// Hand-built inputs shared by several test files.

#include <functional>
#include <string>

#include <doctest.h>
#include <json.hpp>

#include "race/common.hpp"

namespace fixture {

// Five EDUs, hand drawn:
//             8:Background
//            /            \
//      6:Attribution     7:Joint
//       /     \          /     \
//     e0    5:Joint     e3     e4
//           /   \
//          e1   e2
inline nlohmann::json five_edu_tree() {
  const std::string text = "Critics say the plan fails. It costs more. It helps fewer. Yet it passed. Voters agreed.";
  return {{"doc_id", "fx5"},
          {"text", text},
          {"edus",
           {{{"id", 0}, {"start", 0}, {"end", 28}},
            {{"id", 1}, {"start", 28}, {"end", 43}},
            {{"id", 2}, {"start", 43}, {"end", 59}},
            {{"id", 3}, {"start", 59}, {"end", 74}},
            {{"id", 4}, {"start", 74}, {"end", static_cast<int>(text.size())}}}},
          {"internals",
           {{{"id", 5}, {"relation", "Joint"}, {"left", 1}, {"right", 2}},
            {{"id", 6}, {"relation", "Attribution"}, {"left", 0}, {"right", 5}},
            {{"id", 7}, {"relation", "Joint"}, {"left", 3}, {"right", 4}},
            {{"id", 8}, {"relation", "Background"}, {"left", 6}, {"right", 7}}}},
          {"root_id", 8}};
}

inline race::ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const race::Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return race::ErrorKind::IoError;
}

}  // namespace fixture
