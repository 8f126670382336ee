import { AnnotationApi } from "./api.js";
import { AnnotationSession } from "./app.js";
import { TaskView } from "./view.js";

const root = document.getElementById("task");
const status = document.getElementById("status");
if (!root) throw new Error("missing #task container");

const api = new AnnotationApi("");
const view = new TaskView(root);
const session = new AnnotationSession(api, view, status);
session.bindKeyboard(document);
void session.start();
