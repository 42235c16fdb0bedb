#pragma once

// Parameter-sweep plan documents: a small XML dialect with <parameter>,
// <substitute>, <copy> and <execute> under a <plan> root. The parser accepts
// only this subset and reports line/column on every failure.

#include <cctype>
#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "minigrid/errors.hpp"

namespace minigrid {

struct SweepParameter {
  std::string name;
  std::vector<std::string> values;
};

enum class CopyDirection { TO_NODE, FROM_NODE };

struct SubstituteCommand {
  std::string src;  // local template path
  std::string dest; // staged file name
};
struct CopyCommand {
  std::string src;
  std::string dest;
  CopyDirection direction = CopyDirection::TO_NODE;
};
struct ExecuteCommand {
  std::string command_line;
};
using PlanCommand = std::variant<SubstituteCommand, CopyCommand, ExecuteCommand>;

struct PlanDocument {
  std::vector<SweepParameter> parameters;
  std::vector<PlanCommand> commands;
};

// $name placeholders, $$ for a literal dollar.
inline std::string substitute(const std::string& text,
                              const std::map<std::string, std::string>& bindings) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    char c = text[i];
    if (c != '$') {
      out += c;
      ++i;
      continue;
    }
    if (i + 1 < text.size() && text[i + 1] == '$') {
      out += '$';
      i += 2;
      continue;
    }
    std::size_t j = i + 1;
    while (j < text.size() && (std::isalnum(std::uint8_t(text[j])) || text[j] == '_'))
      ++j;
    if (j == i + 1) {
      out += '$'; // bare dollar, not a placeholder
      ++i;
      continue;
    }
    std::string name = text.substr(i + 1, j - i - 1);
    auto it = bindings.find(name);
    if (it == bindings.end()) throw UndeclaredParameter(name);
    out += it->second;
    i = j;
  }
  return out;
}

// Returns the placeholder names used in a template.
inline std::vector<std::string> placeholders(const std::string& text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] != '$') {
      ++i;
      continue;
    }
    if (i + 1 < text.size() && text[i + 1] == '$') {
      i += 2;
      continue;
    }
    std::size_t j = i + 1;
    while (j < text.size() && (std::isalnum(std::uint8_t(text[j])) || text[j] == '_'))
      ++j;
    if (j > i + 1) out.push_back(text.substr(i + 1, j - i - 1));
    i = j > i + 1 ? j : i + 1;
  }
  return out;
}

namespace plan_detail {

struct Cursor {
  const std::string& text;
  std::size_t pos = 0;
  int line = 1;
  int col = 1;

  bool eof() const { return pos >= text.size(); }
  char peek() const { return text[pos]; }

  char get() {
    char c = text[pos++];
    if (c == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
    return c;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw MalformedPlan(what, line, col);
  }

  void skip_ws() {
    while (!eof() && std::isspace(std::uint8_t(peek()))) get();
  }

  void skip_ws_and_comments() {
    for (;;) {
      skip_ws();
      if (text.compare(pos, 4, "<!--") != 0) return;
      while (!eof() && text.compare(pos, 3, "-->") != 0) get();
      if (eof()) fail("unterminated comment");
      get();
      get();
      get();
    }
  }

  void expect(char c) {
    if (eof() || peek() != c) fail(std::string("expected '") + c + "'");
    get();
  }

  std::string name_token() {
    std::string out;
    while (!eof() && (std::isalnum(std::uint8_t(peek())) || peek() == '_' ||
                      peek() == '-' || peek() == ':'))
      out += get();
    if (out.empty()) fail("expected a name");
    return out;
  }
};

inline std::string decode_entities(Cursor& c, const std::string& raw, int line, int col) {
  std::string out;
  for (std::size_t i = 0; i < raw.size();) {
    if (raw[i] != '&') {
      out += raw[i++];
      continue;
    }
    auto semi = raw.find(';', i);
    if (semi == std::string::npos) throw MalformedPlan("unterminated entity", line, col);
    std::string ent = raw.substr(i + 1, semi - i - 1);
    if (ent == "amp") out += '&';
    else if (ent == "lt") out += '<';
    else if (ent == "gt") out += '>';
    else if (ent == "quot") out += '"';
    else if (ent == "apos") out += '\'';
    else throw MalformedPlan("unknown entity &" + ent + ";", line, col);
    i = semi + 1;
  }
  (void)c;
  return out;
}

struct Element {
  std::string name;
  std::map<std::string, std::string> attrs;
  std::string text; // concatenated character data
  std::vector<Element> children;
  int line = 0;
  int col = 0;
};

inline Element parse_element(Cursor& c) {
  c.expect('<');
  Element el;
  el.line = c.line;
  el.col = c.col;
  el.name = c.name_token();
  for (;;) {
    c.skip_ws();
    if (c.eof()) c.fail("unterminated tag");
    if (c.peek() == '/') {
      c.get();
      c.expect('>');
      return el; // self-closing
    }
    if (c.peek() == '>') {
      c.get();
      break;
    }
    int aline = c.line, acol = c.col;
    std::string aname = c.name_token();
    c.skip_ws();
    c.expect('=');
    c.skip_ws();
    if (c.eof() || (c.peek() != '"' && c.peek() != '\''))
      c.fail("expected quoted attribute value");
    char quote = c.get();
    std::string raw;
    while (!c.eof() && c.peek() != quote) raw += c.get();
    if (c.eof()) c.fail("unterminated attribute value");
    c.get();
    if (el.attrs.count(aname))
      throw MalformedPlan("duplicate attribute '" + aname + "'", aline, acol);
    el.attrs[aname] = decode_entities(c, raw, aline, acol);
  }
  // content
  for (;;) {
    if (c.eof()) c.fail("unterminated element <" + el.name + ">");
    if (c.peek() == '<') {
      if (c.text.compare(c.pos, 4, "<!--") == 0) {
        c.skip_ws_and_comments();
        continue;
      }
      if (c.text.compare(c.pos, 2, "</") == 0) {
        c.get();
        c.get();
        std::string closing = c.name_token();
        if (closing != el.name)
          c.fail("mismatched closing tag </" + closing + "> for <" + el.name + ">");
        c.skip_ws();
        c.expect('>');
        return el;
      }
      el.children.push_back(parse_element(c));
      continue;
    }
    int tline = c.line, tcol = c.col;
    std::string raw;
    while (!c.eof() && c.peek() != '<') raw += c.get();
    el.text += decode_entities(c, raw, tline, tcol);
  }
}

} // namespace plan_detail

inline PlanDocument parse_plan(const std::string& text) {
  plan_detail::Cursor cursor{text};
  cursor.skip_ws_and_comments();
  if (text.compare(cursor.pos, 5, "<?xml") == 0) {
    while (!cursor.eof() && cursor.peek() != '>') cursor.get();
    if (cursor.eof()) cursor.fail("unterminated declaration");
    cursor.get();
    cursor.skip_ws_and_comments();
  }
  if (cursor.eof() || cursor.peek() != '<') cursor.fail("expected <plan> root");
  plan_detail::Element root = plan_detail::parse_element(cursor);
  cursor.skip_ws_and_comments();
  if (!cursor.eof()) cursor.fail("trailing content after </plan>");
  if (root.name != "plan")
    throw MalformedPlan("root element must be <plan>, got <" + root.name + ">",
                        root.line, root.col);

  PlanDocument plan;
  auto need_attr = [](const plan_detail::Element& el, const char* key) {
    auto it = el.attrs.find(key);
    if (it == el.attrs.end())
      throw MalformedPlan("<" + el.name + "> requires attribute '" + key + "'",
                          el.line, el.col);
    return it->second;
  };

  for (const auto& el : root.children) {
    if (el.name == "parameter") {
      SweepParameter p;
      p.name = need_attr(el, "name");
      for (const auto& prev : plan.parameters)
        if (prev.name == p.name)
          throw MalformedPlan("duplicate parameter '" + p.name + "'", el.line, el.col);
      for (const auto& v : el.children) {
        if (v.name != "value")
          throw MalformedPlan("<parameter> may only contain <value>", v.line, v.col);
        p.values.push_back(v.text);
      }
      if (p.values.empty())
        throw MalformedPlan("parameter '" + p.name + "' has no values", el.line, el.col);
      plan.parameters.push_back(std::move(p));
    } else if (el.name == "substitute") {
      plan.commands.push_back(SubstituteCommand{need_attr(el, "src"), need_attr(el, "dest")});
    } else if (el.name == "copy") {
      CopyCommand cmd;
      cmd.src = need_attr(el, "src");
      cmd.dest = need_attr(el, "dest");
      std::string dir = need_attr(el, "direction");
      if (dir == "TO_NODE") cmd.direction = CopyDirection::TO_NODE;
      else if (dir == "FROM_NODE") cmd.direction = CopyDirection::FROM_NODE;
      else throw MalformedPlan("direction must be TO_NODE or FROM_NODE", el.line, el.col);
      plan.commands.push_back(cmd);
    } else if (el.name == "execute") {
      if (el.text.empty())
        throw MalformedPlan("<execute> requires a command line", el.line, el.col);
      plan.commands.push_back(ExecuteCommand{el.text});
    } else {
      throw MalformedPlan("unknown element <" + el.name + ">", el.line, el.col);
    }
  }

  bool has_execute = false;
  for (const auto& cmd : plan.commands)
    if (std::holds_alternative<ExecuteCommand>(cmd)) has_execute = true;
  if (!has_execute)
    throw MalformedPlan("plan must contain at least one <execute>", root.line, root.col);

  // every placeholder in an execute line must be declared up front;
  // substitute templates are checked when their files are read
  auto declared = [&](const std::string& name) {
    for (const auto& p : plan.parameters)
      if (p.name == name) return true;
    return false;
  };
  for (const auto& cmd : plan.commands)
    if (const auto* ex = std::get_if<ExecuteCommand>(&cmd))
      for (const auto& ph : placeholders(ex->command_line))
        if (!declared(ph)) throw UndeclaredParameter(ph);

  return plan;
}

} // namespace minigrid
