import { StudioUi } from "./ui.js";

const params = new URLSearchParams(window.location.search);
const gateway = params.get("gateway") ?? window.location.origin;
const scale = Number(params.get("scale") ?? "3");

new StudioUi(gateway, Number.isFinite(scale) && scale > 0 ? scale : 3);
