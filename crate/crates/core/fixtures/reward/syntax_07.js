let s = `tpl`;
