// Support-graph side panel: the forest as nested lists, floor-rooted trees
// first, floating objects after.

import { childrenByParent, floatingIds, topLabel, type ViewState } from "./state.js";
import { FLOOR_ID } from "./types.js";

export function renderGraphPanel(view: ViewState, container: HTMLElement): void {
  container.innerHTML = "";
  container.appendChild(buildGraphList(view, document));
}

export function buildGraphList(view: ViewState, doc: Document): HTMLElement {
  const children = childrenByParent(view);
  const root = doc.createElement("ul");
  root.className = "sg-root";

  const floor = doc.createElement("li");
  floor.textContent = "floor";
  const floorChildren = children.get(FLOOR_ID) ?? [];
  if (floorChildren.length) floor.appendChild(subtree(floorChildren));
  root.appendChild(floor);

  for (const id of floatingIds(view)) {
    const li = doc.createElement("li");
    li.className = "sg-floating";
    li.textContent = `${describe(id)} (floating)`;
    const kids = children.get(id) ?? [];
    if (kids.length) li.appendChild(subtree(kids));
    root.appendChild(li);
  }
  return root;

  function subtree(ids: number[]): HTMLElement {
    const ul = doc.createElement("ul");
    for (const id of ids) {
      const li = doc.createElement("li");
      li.dataset.nodeId = String(id);
      li.textContent = describe(id);
      if (id === view.selected) li.className = "sg-selected";
      const kids = children.get(id) ?? [];
      if (kids.length) li.appendChild(subtree(kids));
      ul.appendChild(li);
    }
    return ul;
  }

  function describe(id: number): string {
    const node = view.nodes.get(id);
    if (!node) return `#${id}`;
    const mark = node.confirmed ? "✓" : "?";
    return `#${id} ${topLabel(node)} ${mark}`;
  }
}
